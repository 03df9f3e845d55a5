"""Heightmap-to-simulation reconstruction.

A flat template quad lattice sitting at the plate plane (y = 0, normals +y)
is displaced along its vertex normals by a per-item depth map, closed
against the plate plane, and filled with stratified-jittered particles.
Every item on the plate goes through this path, whether its depth map came
from a file or from an analytic primitive.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .depthio import DepthMap, SegMask, mask_depth
from .errors import (
    DimensionMismatchError,
    EmptyItemError,
    OpenMeshError,
    SamplingError,
)
from .materials import MaterialParams

__all__ = [
    "TemplateQuadMesh",
    "FoodMesh",
    "ParticleSet",
    "flat_template",
    "template_for",
    "mask_depth",
    "deform_template",
    "close_and_volume",
    "sample_particles",
    "export_obj",
]


@dataclass(frozen=True)
class TemplateQuadMesh:
    """A complete rows x cols vertex lattice with per-vertex unit normals.

    Vertex (r, c) lives at index ``r * cols + c``.
    """

    vertices: np.ndarray  # (n, 3) meters
    normals: np.ndarray  # (n, 3) unit vectors
    rows: int
    cols: int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        n = np.asarray(self.normals, dtype=np.float64)
        if self.rows < 2 or self.cols < 2:
            raise DimensionMismatchError("lattice needs at least 2x2 vertices")
        if v.shape != (self.rows * self.cols, 3):
            raise DimensionMismatchError(
                f"expected {self.rows * self.cols} vertices, got {v.shape}"
            )
        if n.shape != v.shape:
            raise DimensionMismatchError("normals shape must match vertices")
        norms = np.linalg.norm(n, axis=1)
        if np.abs(norms - 1.0).max() > 1e-9:
            raise ValueError("template normals must have unit length")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "normals", n)


@dataclass(frozen=True)
class FoodMesh:
    """A deformed template, optionally closed against the plate plane.

    ``heights`` keeps the displacement lattice (rows x cols) so the closed
    mesh carries its own inside test: a point is inside when its (x, z)
    falls in a footprint pixel cell and 0 <= y <= height of that cell.
    """

    vertices: np.ndarray  # (n, 3)
    rows: int
    cols: int
    heights: np.ndarray  # (rows, cols) displacement in meters
    pixel_pitch: float
    origin_xz: tuple[float, float]  # world (x, z) of vertex (0, 0)
    closed: bool
    item_id: int
    category: str
    volume: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.shape != (self.rows * self.cols, 3):
            raise DimensionMismatchError("vertex count must equal template's")
        if self.closed and not (0.0 < self.volume < np.inf):
            raise OpenMeshError("a closed mesh must bound positive volume")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(
            self, "heights", np.asarray(self.heights, dtype=np.float64)
        )

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Vectorized inside test against the closed step heightfield."""
        if not self.closed:
            raise OpenMeshError("inside test requires a closed mesh")
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        x0, z0 = self.origin_xz
        col = np.rint((p[:, 0] - x0) / self.pixel_pitch).astype(np.int64)
        row = np.rint((p[:, 2] - z0) / self.pixel_pitch).astype(np.int64)
        ok = (row >= 0) & (row < self.rows) & (col >= 0) & (col < self.cols)
        h = np.zeros(len(p))
        h[ok] = self.heights[row[ok], col[ok]]
        return ok & (p[:, 1] >= 0.0) & (p[:, 1] <= h) & (h > 0.0)


@dataclass(frozen=True)
class ParticleSet:
    """Simulator-ready particles sampled from one closed food mesh."""

    positions: np.ndarray  # (n, 3) meters
    mass: float  # kg, per particle (uniform within an item)
    volume: float  # m^3, per particle
    material: MaterialParams
    item_id: int
    sampling_seed: int

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError("positions must be (n, 3)")
        object.__setattr__(self, "positions", p)

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def total_mass(self) -> float:
        return self.count * self.mass


def flat_template(
    rows: int, cols: int, pixel_pitch: float, origin_xz: tuple[float, float] = (0.0, 0.0)
) -> TemplateQuadMesh:
    """Axis-aligned lattice at y = 0 with +y normals, one vertex per pixel."""
    x0, z0 = origin_xz
    cc, rr = np.meshgrid(np.arange(cols), np.arange(rows))
    verts = np.column_stack(
        [
            x0 + cc.ravel() * pixel_pitch,
            np.zeros(rows * cols),
            z0 + rr.ravel() * pixel_pitch,
        ]
    )
    normals = np.tile([0.0, 1.0, 0.0], (rows * cols, 1))
    return TemplateQuadMesh(vertices=verts, normals=normals, rows=rows, cols=cols)


def template_for(
    depth: DepthMap, origin_xz: tuple[float, float] = (0.0, 0.0)
) -> TemplateQuadMesh:
    """Template matched to a depth map's lattice (one vertex per pixel)."""
    return flat_template(depth.height, depth.width, depth.pixel_pitch, origin_xz)


def deform_template(
    template: TemplateQuadMesh,
    depth: DepthMap,
    item_id: int = 0,
    category: str = "",
) -> FoodMesh:
    """Displace each vertex along its normal: p' = p + D(u, v) * n.

    The template lattice and the depth map must share their resolution.
    """
    if (template.rows, template.cols) != (depth.height, depth.width):
        raise DimensionMismatchError(
            f"template {template.rows}x{template.cols} does not match "
            f"depth {depth.height}x{depth.width}"
        )
    d = depth.values.ravel()
    deformed = template.vertices + d[:, None] * template.normals
    v0 = template.vertices[0]
    return FoodMesh(
        vertices=deformed,
        rows=template.rows,
        cols=template.cols,
        heights=depth.values.copy(),
        pixel_pitch=depth.pixel_pitch,
        origin_xz=(float(v0[0]), float(v0[2])),
        closed=False,
        item_id=item_id,
        category=category,
    )


def close_and_volume(mesh: FoodMesh, depth: DepthMap) -> tuple[FoodMesh, float]:
    """Close the deformed surface against the plate plane and integrate.

    The enclosed volume is the prism sum over footprint pixels,
    sum(D) * pitch^2. Raises :class:`EmptyItemError` when no pixel has
    positive displacement.
    """
    if (mesh.rows, mesh.cols) != (depth.height, depth.width):
        raise DimensionMismatchError("mesh and depth lattice dims differ")
    if not (depth.values > 0).any():
        raise EmptyItemError("cannot close a mesh over an empty footprint")
    volume = float(depth.values.sum() * depth.pixel_pitch**2)
    closed = replace(mesh, closed=True, volume=volume, heights=depth.values.copy())
    return closed, volume


def sample_particles(
    mesh: FoodMesh, params: MaterialParams, seed: int
) -> ParticleSet:
    """Stratified-jittered particle fill of a closed mesh.

    One uniform sample per cubic cell of edge (1/density)^(1/3), anchored at
    the footprint bounding box minimum; samples failing the inside test are
    rejected. Per-particle volume is item volume / count, which makes the
    total mass match volume x mass density exactly.
    """
    if not mesh.closed:
        raise OpenMeshError("sampling requires a closed mesh")
    density = params.sampling_density
    if not (density > 0):
        raise SamplingError("sampling density must be positive")

    rows, cols = np.nonzero(mesh.heights > 0)
    x0, z0 = mesh.origin_xz
    half = 0.5 * mesh.pixel_pitch
    lo = np.array(
        [
            x0 + cols.min() * mesh.pixel_pitch - half,
            0.0,
            z0 + rows.min() * mesh.pixel_pitch - half,
        ]
    )
    hi = np.array(
        [
            x0 + cols.max() * mesh.pixel_pitch + half,
            float(mesh.heights.max()),
            z0 + rows.max() * mesh.pixel_pitch + half,
        ]
    )
    edge = (1.0 / density) ** (1.0 / 3.0)
    ncells = np.maximum(1, np.ceil((hi - lo) / edge).astype(np.int64))

    rng = np.random.default_rng(seed)
    ii, jj, kk = np.meshgrid(
        np.arange(ncells[0]), np.arange(ncells[1]), np.arange(ncells[2]),
        indexing="ij",
    )
    corners = lo + np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()]) * edge
    pts = corners + rng.random((len(corners), 3)) * edge
    keep = mesh.contains(pts)
    pts = pts[keep]
    if len(pts) == 0:
        raise SamplingError(
            f"density {density:g}/m^3 yields no particles for volume "
            f"{mesh.volume:g} m^3"
        )
    per_volume = mesh.volume / len(pts)
    return ParticleSet(
        positions=pts,
        mass=per_volume * params.mass_density,
        volume=per_volume,
        material=params,
        item_id=mesh.item_id,
        sampling_seed=seed,
    )


def export_obj(path, mesh: FoodMesh) -> None:
    """Debug OBJ dump of the heightfield surface (footprint cells only).

    Writes one quad per footprint pixel at its displaced height, a matching
    bottom quad at y = 0, and vertical side quads along the footprint
    boundary. Not a round-trip format.
    """
    h = mesh.heights
    pitch = mesh.pixel_pitch
    x0, z0 = mesh.origin_xz
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int, int]] = []

    def cell_quad(r, c, y):
        x, z = x0 + c * pitch, z0 + r * pitch
        base = len(verts) + 1  # OBJ indices are 1-based
        verts.extend(
            [
                (x - pitch / 2, y, z - pitch / 2),
                (x + pitch / 2, y, z - pitch / 2),
                (x + pitch / 2, y, z + pitch / 2),
                (x - pitch / 2, y, z + pitch / 2),
            ]
        )
        faces.append((base, base + 1, base + 2, base + 3))

    rr, cc = np.nonzero(h > 0)
    occupied = set(zip(rr.tolist(), cc.tolist()))
    for r, c in zip(rr.tolist(), cc.tolist()):
        cell_quad(r, c, float(h[r, c]))
        cell_quad(r, c, 0.0)
        # side curtains where a neighbor cell is outside the footprint
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if (r + dr, c + dc) not in occupied:
                x, z = x0 + c * pitch, z0 + r * pitch
                if dr:  # edge runs along x at fixed z
                    xa, xb = x - pitch / 2, x + pitch / 2
                    za = zb = z + dr * pitch / 2
                else:  # edge runs along z at fixed x
                    za, zb = z - pitch / 2, z + pitch / 2
                    xa = xb = x + dc * pitch / 2
                base = len(verts) + 1
                y = float(h[r, c])
                verts.extend([(xa, 0, za), (xb, 0, zb), (xb, y, zb), (xa, y, za)])
                faces.append((base, base + 1, base + 2, base + 3))

    with open(path, "w") as fh:
        fh.write(f"# platesim debug mesh, item {mesh.item_id}\n")
        for v in verts:
            fh.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        for f in faces:
            fh.write(f"f {f[0]} {f[1]} {f[2]} {f[3]}\n")
