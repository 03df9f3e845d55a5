"""Rule-based acquisition success scoring over rendered observations.

The estimator stands in for a learned success predictor: it takes per-item
features extracted from a top-down depth map plus segmentation mask, the
environment and bite-size one-hots, and emits a (skewer, scoop, twirl)
success vector from a documented rule table. Feature definitions are
identical whether the heightfield came from ingestion or from rendering
particles, which is the whole point: observations on either side of the
sim boundary land in the same feature space.

Tests assert orderings and gates of the rule table, never absolute
constants, so the table can be re-tuned from config without breaking them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .depthio import DepthMap, SegMask
from .errors import ConfigError, EmptyItemError
from .materials import MaterialParams, ModelClass

__all__ = [
    "EstimatorConfig",
    "EnvClass",
    "BiteSizeClass",
    "SuccessEstimate",
    "ItemObservation",
    "classify_environment",
    "classify_bite_size",
    "estimate_success",
    "estimate_for",
    "observe_items",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """Thresholds and base-rate table for the scoring rules."""

    env_distance: float = 0.02
    bite_min: float = 1e-6
    bite_max: float = 8e-6
    density_ref: float = 15.0
    skewer_base_elastic: float = 0.9
    skewer_base_elastoplastic: float = 0.9
    skewer_base_plastic: float = 0.1
    scoop_base_elastic: float = 0.3
    scoop_base_elastoplastic: float = 0.7
    scoop_base_plastic: float = 0.8
    twirl_noodle: float = 0.9
    twirl_other: float = 0.05
    not_bite_factor: float = 0.2
    roll_penalty: float = 0.8
    isolated_scoop_factor: float = 0.5
    flat_top_floor: float = 0.2
    density_floor: float = 0.3
    roll_elongation: float = 1.5
    roll_height_factor: float = 0.8

    def __post_init__(self):
        if not (0 < self.bite_min <= self.bite_max):
            raise ConfigError("need 0 < bite_min <= bite_max")
        if self.env_distance < 0 or self.density_ref <= 0:
            raise ConfigError("env_distance >= 0 and density_ref > 0 required")

    @classmethod
    def from_dict(cls, data: dict) -> "EstimatorConfig":
        known = set(cls.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown estimator fields: {sorted(bad)}")
        return cls(**data)

    def skewer_base(self, model_class: ModelClass) -> float:
        return {
            ModelClass.ELASTIC: self.skewer_base_elastic,
            ModelClass.ELASTOPLASTIC: self.skewer_base_elastoplastic,
            ModelClass.PLASTIC: self.skewer_base_plastic,
        }[model_class]

    def scoop_base(self, model_class: ModelClass) -> float:
        return {
            ModelClass.ELASTIC: self.scoop_base_elastic,
            ModelClass.ELASTOPLASTIC: self.scoop_base_elastoplastic,
            ModelClass.PLASTIC: self.scoop_base_plastic,
        }[model_class]


@dataclass(frozen=True)
class EnvClass:
    """Whether the item sits against the rim or another item."""

    wall: bool

    @property
    def one_hot(self) -> np.ndarray:
        return np.array([0.0, 1.0]) if self.wall else np.array([1.0, 0.0])


@dataclass(frozen=True)
class BiteSizeClass:
    bite_sized: bool

    @property
    def one_hot(self) -> np.ndarray:
        return np.array([1.0, 0.0]) if self.bite_sized else np.array([0.0, 1.0])


@dataclass(frozen=True)
class SuccessEstimate:
    """Success rates for the three acquisition primitives, each in [0, 1]."""

    skewer: float
    scoop: float
    twirl: float

    def __post_init__(self):
        for name in ("skewer", "scoop", "twirl"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} estimate {v} outside [0, 1]")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.skewer, self.scoop, self.twirl])

    @property
    def best(self) -> tuple[str, float]:
        pairs = [("skewer", self.skewer), ("scoop", self.scoop), ("twirl", self.twirl)]
        return max(pairs, key=lambda kv: kv[1])


@dataclass(frozen=True)
class ItemObservation:
    """Per-item features measured from a depth map plus mask."""

    item_id: int
    category: str
    model_class: ModelClass
    noodle: bool
    volume: float
    area: float
    mean_height: float
    max_height: float
    height_std: float
    elongation: float
    roll_risk: bool
    density: float
    rim_distance: float
    item_distance: float


def classify_environment(obs: ItemObservation, config: EstimatorConfig = EstimatorConfig()) -> EnvClass:
    """Wall iff the item is within env_distance of the rim or a neighbor."""
    return EnvClass(wall=min(obs.rim_distance, obs.item_distance) <= config.env_distance)


def classify_bite_size(volume: float, config: EstimatorConfig = EstimatorConfig()) -> BiteSizeClass:
    return BiteSizeClass(bite_sized=config.bite_min <= volume <= config.bite_max)


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, x))


def estimate_success(
    obs: ItemObservation,
    env: EnvClass,
    bite: BiteSizeClass,
    config: EstimatorConfig = EstimatorConfig(),
) -> SuccessEstimate:
    """Apply the rule table; monotone in each stated factor."""
    if obs.mean_height > 0:
        flat_top = _clamp(1.0 - obs.height_std / obs.mean_height, config.flat_top_floor, 1.0)
    else:
        flat_top = config.flat_top_floor
    skewer = (
        config.skewer_base(obs.model_class)
        * (1.0 if bite.bite_sized else config.not_bite_factor)
        * (1.0 - config.roll_penalty * float(obs.roll_risk))
        * flat_top
    )
    density_term = _clamp(obs.density / config.density_ref, config.density_floor, 1.0)
    scoop = (
        config.scoop_base(obs.model_class)
        * (1.0 if env.wall else config.isolated_scoop_factor)
        * density_term
    )
    if obs.noodle:
        twirl = config.twirl_noodle * _clamp(obs.density / config.density_ref, 0.0, 1.0)
    else:
        twirl = config.twirl_other
    return SuccessEstimate(
        skewer=_clamp(skewer, 0.0, 1.0),
        scoop=_clamp(scoop, 0.0, 1.0),
        twirl=_clamp(twirl, 0.0, 1.0),
    )


def estimate_for(
    obs: ItemObservation, config: EstimatorConfig = EstimatorConfig()
) -> SuccessEstimate:
    """Classify environment and bite size, then score."""
    return estimate_success(
        obs,
        classify_environment(obs, config),
        classify_bite_size(obs.volume, config),
        config,
    )


def observe_items(
    depth: DepthMap,
    mask: SegMask,
    materials: dict[int, MaterialParams],
    plate_center_xz: tuple[float, float],
    plate_inner_radius: float,
    origin_xz: tuple[float, float] = (0.0, 0.0),
    rim_tube_radius: float = 0.0075,
    plate_radius: Optional[float] = None,
    config: EstimatorConfig = EstimatorConfig(),
    require_all: bool = True,
) -> dict[int, ItemObservation]:
    """Extract per-item features from a heightfield and its mask.

    ``depth`` holds heights above the plate surface; pixel (r, c) sits at
    world (origin_x + c*pitch, origin_z + r*pitch). Every item declared in
    ``materials`` must own at least one pixel unless ``require_all`` is
    false, in which case unseen items (pushed out of frame, fully occluded)
    are dropped from the result.
    """
    mask.require_matches(depth)
    pitch = depth.pixel_pitch
    if plate_radius is None:
        plate_radius = plate_inner_radius + 2 * rim_tube_radius
    ring_r = plate_radius - rim_tube_radius
    ring_y = rim_tube_radius

    jj, ii = np.meshgrid(np.arange(depth.width), np.arange(depth.height))
    px = origin_xz[0] + jj * pitch
    pz = origin_xz[1] + ii * pitch

    footprints = {}
    for item_id in sorted(materials):
        sel = mask.labels == item_id
        if not sel.any():
            if require_all:
                raise EmptyItemError(f"item {item_id} owns no pixels in the mask")
            continue
        footprints[item_id] = sel

    out: dict[int, ItemObservation] = {}
    for item_id, mat in sorted(materials.items()):
        if item_id not in footprints:
            continue
        sel = footprints[item_id]
        d = depth.values[sel]
        x = px[sel]
        z = pz[sel]
        area = float(sel.sum()) * pitch * pitch
        volume = float(d.sum()) * pitch * pitch
        mean_h = float(d.mean())
        max_h = float(d.max())
        std_h = float(d.std())

        # footprint frame; each pixel contributes a square patch so thin
        # strips keep a nonzero minor extent
        coords = np.column_stack([x, z])
        centered = coords - coords.mean(axis=0)
        cov = centered.T @ centered / len(coords) + (pitch**2 / 12.0) * np.eye(2)
        evals = np.linalg.eigvalsh(cov)
        minor_extent = float(2.0 * np.sqrt(3.0 * evals[0]))
        elongation = float(np.sqrt(evals[1] / evals[0]))
        roll_risk = bool(
            elongation >= config.roll_elongation
            and max_h >= config.roll_height_factor * minor_extent
        )

        density = mat.mass_density * mean_h

        radial = np.hypot(x - plate_center_xz[0], z - plate_center_xz[1])
        rim_d = float((np.hypot(radial - ring_r, d - ring_y) - rim_tube_radius).min())
        rim_d = max(rim_d, 0.0)

        item_d = np.inf
        other = np.zeros_like(sel)
        for oid, osel in footprints.items():
            if oid != item_id:
                other |= osel
        if other.any():
            tree = cKDTree(np.column_stack([px[other], pz[other]]))
            dist, _ = tree.query(coords, k=1)
            item_d = float(dist.min())

        out[item_id] = ItemObservation(
            item_id=item_id,
            category=mat.category,
            model_class=mat.model_class,
            noodle=mat.noodle,
            volume=volume,
            area=area,
            mean_height=mean_h,
            max_height=max_h,
            height_std=std_h,
            elongation=elongation,
            roll_risk=roll_risk,
            density=density,
            rim_distance=rim_d,
            item_distance=item_d,
        )
    return out
