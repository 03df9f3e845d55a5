"""Heightmap and segmentation-mask containers plus their file formats.

Depth maps hold displacement in meters above the plate plane, stored
row-major with pixel (row, col) at world (x0 + col*pitch, z0 + row*pitch).
On disk they are PFM (portable float map, 32-bit floats); masks are 8-bit
binary PGM (P5) with the label as the pixel value and 0 as background.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptyItemError

__all__ = [
    "DepthMap",
    "SegMask",
    "read_pfm",
    "write_pfm",
    "read_pgm",
    "write_pgm",
]


@dataclass(frozen=True)
class DepthMap:
    """A non-negative heightfield in meters with square pixels."""

    values: np.ndarray
    pixel_pitch: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise DimensionMismatchError(
                f"depth map must be 2D with both sides >= 2, got {v.shape}"
            )
        if not np.isfinite(v).all():
            raise ValueError("depth map contains non-finite values")
        if (v < 0).any():
            raise ValueError("depth map contains negative displacement")
        if not (self.pixel_pitch > 0):
            raise ValueError("pixel_pitch must be positive")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SegMask:
    """Integer item labels per pixel; 0 means background."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise DimensionMismatchError(f"mask must be 2D, got {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise ValueError("mask labels must be integers")
        if (lab < 0).any():
            raise ValueError("mask labels must be non-negative")
        object.__setattr__(self, "labels", lab.astype(np.int32, copy=False))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def item_ids(self) -> list[int]:
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i != 0]

    def require_matches(self, depth: DepthMap) -> None:
        if (self.height, self.width) != (depth.height, depth.width):
            raise DimensionMismatchError(
                f"mask {self.labels.shape} does not match depth "
                f"{depth.values.shape}"
            )


def write_pfm(path, depth: DepthMap) -> None:
    """Write a grayscale PFM ('Pf'), little-endian, bottom row first."""
    v = depth.values.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{depth.width} {depth.height}\n".encode("ascii"))
        # negative scale marks little-endian per the PFM convention
        fh.write(b"-1.0\n")
        fh.write(np.flipud(v).tobytes())


def read_pfm(path, pixel_pitch: float) -> DepthMap:
    """Read a grayscale PFM written by :func:`write_pfm` (or compatible)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise ValueError(f"not a grayscale PFM file: magic {magic!r}")
        dims = fh.readline().decode("ascii")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if m is None:
            raise ValueError(f"bad PFM dimension line: {dims!r}")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(fh.readline().decode("ascii").strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(width * height * 4), dtype=dtype)
    if data.size != width * height:
        raise ValueError("truncated PFM payload")
    values = np.flipud(data.reshape(height, width)).astype(np.float64)
    return DepthMap(values=values, pixel_pitch=pixel_pitch)


def write_pgm(path, mask: SegMask) -> None:
    """Write an 8-bit binary PGM (P5); labels must fit in a byte."""
    lab = mask.labels
    if lab.max(initial=0) > 255:
        raise ValueError("PGM masks support labels up to 255")
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        fh.write(f"{mask.width} {mask.height}\n255\n".encode("ascii"))
        fh.write(lab.astype(np.uint8).tobytes())


def read_pgm(path) -> SegMask:
    """Read an 8-bit binary PGM (P5) as a label mask."""
    with open(path, "rb") as fh:
        content = fh.read()
    m = re.match(rb"^P5\s+(\d+)\s+(\d+)\s+(\d+)\s", content)
    if m is None:
        raise ValueError("not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval > 255:
        raise ValueError("16-bit PGM not supported")
    payload = content[m.end() : m.end() + width * height]
    if len(payload) != width * height:
        raise ValueError("truncated PGM payload")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return SegMask(labels=labels.astype(np.int32))


def mask_depth(depth: DepthMap, mask: SegMask, item_id: int) -> DepthMap:
    """Keep depth where ``mask == item_id``, zero elsewhere.

    Raises
    ------
    DimensionMismatchError
        if mask and depth shapes differ.
    EmptyItemError
        if ``item_id`` labels no pixel.
    """
    mask.require_matches(depth)
    sel = mask.labels == int(item_id)
    if not sel.any():
        raise EmptyItemError(f"item {item_id} not present in mask")
    out = np.where(sel, depth.values, 0.0)
    return DepthMap(values=out, pixel_pitch=depth.pixel_pitch)
