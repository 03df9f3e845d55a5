"""Pre-acquisition action trajectories: push, cut, flip.

Each planner returns a fork trajectory (clock starting at zero, rebased by
the rollout driver) plus a termination monitor. Push monitors fire on
rim/item proximity or a travel cap; cut and flip simply run to completion.

Conventions used throughout: the fork's local tines point down (-y) with
the comb spread along local x, the plate's top surface is at its pose
height, and item frames come from the mass-weighted particle covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import _kernels, _sdf
from .errors import (
    ConfigError,
    InfeasibleActionError,
    ItemTooTallError,
    TooFewParticlesError,
)
from .mpm import SimWorld
from .tools import Pose, ToolSDF, ToolTrajectory, sdf_eval

__all__ = [
    "ActionKind",
    "ActionSpec",
    "ActionParams",
    "ItemGeometry",
    "PlateInfo",
    "TerminationMonitor",
    "PushMonitor",
    "item_geometry",
    "connected_components",
    "split_components",
    "plan_push",
    "plan_cut",
    "plan_flip",
    "plan_action",
    "candidate_actions",
    "PUSH_DIRECTIONS",
]

PUSH_DIRECTIONS = {
    "+x": np.array([1.0, 0.0, 0.0]),
    "-x": np.array([-1.0, 0.0, 0.0]),
    "+z": np.array([0.0, 0.0, 1.0]),
    "-z": np.array([0.0, 0.0, -1.0]),
}

_UP = np.array([0.0, 1.0, 0.0])


class ActionKind:
    PUSH = "push"
    CUT = "cut"
    FLIP = "flip"


@dataclass(frozen=True)
class ActionParams:
    """Speeds and offsets for the three actions; all config-overridable."""

    push_speed: float = 0.05
    descend_speed: float = 0.1
    cut_speed: float = 0.1
    flick_speed: float = 0.2
    flick_distance: float = 0.01
    flip_speed: float = 0.15
    flip_elevation_deg: float = 20.0
    flip_height_fraction: float = 0.4
    flip_travel_factor: float = 1.2
    push_tip_height: float = 0.002
    cut_bottom_gap: float = 0.001
    approach_clearance: float = 0.004
    start_clearance: float = 0.015
    settle_time: float = 0.2

    @classmethod
    def from_dict(cls, data: dict) -> "ActionParams":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown action parameters: {sorted(bad)}")
        return cls(**data)


@dataclass(frozen=True)
class ActionSpec:
    """One candidate pre-acquisition action against a target item."""

    kind: str
    item_id: int
    direction: Optional[str] = None
    params: ActionParams = field(default_factory=ActionParams)

    def __post_init__(self):
        if self.kind == ActionKind.PUSH:
            if self.direction not in PUSH_DIRECTIONS:
                raise ConfigError(
                    f"push direction must be one of {sorted(PUSH_DIRECTIONS)}"
                )
        elif self.kind in (ActionKind.CUT, ActionKind.FLIP):
            if self.direction is not None:
                raise ConfigError(f"{self.kind} takes no direction")
        else:
            raise ConfigError(f"unknown action kind {self.kind!r}")

    @property
    def label(self) -> str:
        return f"push{self.direction}" if self.kind == ActionKind.PUSH else self.kind


@dataclass(frozen=True)
class ItemGeometry:
    """Principal-axis summary of one item's particles.

    ``axes[i]`` is the i-th principal axis (unit row vector), eigen-extents
    sorted major first. ``spans`` are the projected max-min lengths along
    those axes, which behave better than eigen-extents for small counts.
    """

    item_id: int
    centroid: np.ndarray
    axes: np.ndarray
    extents: np.ndarray
    spans: np.ndarray
    footprint_area: float
    mean_height: float
    max_height: float

    @property
    def major_axis(self) -> np.ndarray:
        return self.axes[0]

    @property
    def minor_extent(self) -> float:
        return float(self.extents[-1])


def item_geometry(
    positions: np.ndarray, masses: np.ndarray, plate_top_y: float = 0.0, item_id: int = 0
) -> ItemGeometry:
    """Mass-weighted centroid and covariance frame of one item."""
    pos = np.asarray(positions, dtype=np.float64)
    m = np.asarray(masses, dtype=np.float64)
    if len(pos) < 4:
        raise TooFewParticlesError(
            f"item {item_id}: geometry needs at least 4 particles, got {len(pos)}"
        )
    total = m.sum()
    centroid = (m[:, None] * pos).sum(axis=0) / total
    d = pos - centroid
    cov = (m[:, None, None] * d[:, :, None] * d[:, None, :]).sum(axis=0) / total
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    axes = evecs[:, order].T.copy()
    for i in range(3):
        if axes[i, np.argmax(np.abs(axes[i]))] < 0:
            axes[i] = -axes[i]
    extents = 2.0 * np.sqrt(3.0 * evals)
    proj = d @ axes.T
    spans = proj.max(axis=0) - proj.min(axis=0)
    cell = 0.002
    cells = np.unique(np.floor(pos[:, [0, 2]] / cell).astype(np.int64), axis=0)
    heights = pos[:, 1] - plate_top_y
    return ItemGeometry(
        item_id=item_id,
        centroid=centroid,
        axes=axes,
        extents=extents,
        spans=spans,
        footprint_area=float(len(cells) * cell * cell),
        mean_height=float(heights.mean()),
        max_height=float(heights.max()),
    )


def connected_components(positions: np.ndarray, radius: float) -> np.ndarray:
    """Labels of particle clusters linked by pairs within ``radius``.

    Labels are assigned in order of each component's lowest particle index.
    """
    if radius <= 0:
        raise ConfigError("component radius must be positive")
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    return np.asarray(_kernels.connected_labels(pos, float(radius)))


def split_components(
    world: SimWorld, item_id: int, radius: Optional[float] = None
) -> list[int]:
    """Relabel an item's spatial clusters as separate items.

    After a cut the pieces still share one id, which confuses per-item
    observation; this gives every cluster its own id so each piece can be
    targeted. The largest cluster keeps ``item_id``, the rest get fresh
    ids above the current maximum. Returns the ids largest-first.
    """
    if radius is None:
        radius = 1.5 * world.dx
    sel = np.flatnonzero(world.item_id == item_id)
    if sel.size == 0:
        raise ConfigError(f"item {item_id} has no particles")
    labels = connected_components(world.x[sel], radius)
    counts = np.bincount(labels)
    order = np.argsort(-counts, kind="stable")
    next_id = int(world.item_id.max()) + 1
    ids = []
    for rank, label in enumerate(order):
        if rank == 0:
            ids.append(item_id)
            continue
        world.item_id[sel[labels == label]] = next_id
        ids.append(next_id)
        next_id += 1
    return ids


@dataclass(frozen=True)
class PlateInfo:
    """World-frame plate geometry extracted from the plate tool."""

    center_xz: tuple[float, float]
    top_y: float
    radius: float
    rim_tube_radius: float
    inner_radius: float

    @classmethod
    def from_world(cls, world: SimWorld) -> "PlateInfo":
        for tool, traj in world.tools:
            if tool.kind == _sdf.PLATE:
                pose = traj.pose_at(world.t)
                return cls(
                    center_xz=(pose.translation[0], pose.translation[2]),
                    top_y=float(pose.translation[1]),
                    radius=tool.dims["radius"],
                    rim_tube_radius=tool.dims["rim_tube_radius"],
                    inner_radius=tool.dims["inner_radius"],
                )
        raise ConfigError("world has no plate tool")

    def rim_distance(self, positions: np.ndarray) -> np.ndarray:
        """Distance from points to the rim torus surface."""
        pos = np.atleast_2d(positions)
        dx = pos[:, 0] - self.center_xz[0]
        dz = pos[:, 2] - self.center_xz[1]
        radial = np.hypot(dx, dz)
        ring_r = self.radius - self.rim_tube_radius
        ring_y = self.top_y + self.rim_tube_radius
        return np.hypot(radial - ring_r, pos[:, 1] - ring_y) - self.rim_tube_radius


class TerminationMonitor:
    """Base monitor: never fires, so the trajectory runs to completion."""

    description = "trajectory completion"

    def __init__(self):
        self.fired_reason: Optional[str] = None

    def __call__(self, world: SimWorld) -> bool:
        return False


class PushMonitor(TerminationMonitor):
    """Stops a push on rim contact, item contact, or travel cap.

    Proximity means the pushed item's particles come within ``threshold``
    (1.5 grid cells) of the rim torus or of any other item's particles;
    the travel cap compares the fork's pose against its push-start pose.
    """

    def __init__(
        self,
        item_id: int,
        plate: PlateInfo,
        threshold: float,
        travel_cap: float,
        push_start: np.ndarray,
    ):
        super().__init__()
        self.item_id = item_id
        self.plate = plate
        self.threshold = threshold
        self.travel_cap = travel_cap
        self.push_start = np.asarray(push_start, dtype=np.float64)
        self.description = (
            f"rim/item proximity <= {threshold:.4f} m or travel >= {travel_cap:.3f} m"
        )

    def __call__(self, world: SimWorld) -> bool:
        mine = world.item_id == self.item_id
        pos = world.x[mine]
        if not len(pos):
            return False
        if self.plate.rim_distance(pos).min() <= self.threshold:
            self.fired_reason = "rim-contact"
            return True
        others = world.x[~mine]
        if len(others):
            dist, _ = cKDTree(others).query(pos, k=1)
            if dist.min() <= self.threshold:
                self.fired_reason = "item-contact"
                return True
        idx = _fork_index(world)
        fork_pos = world.tools[idx][1].pose_at(world.t).translation
        if np.linalg.norm(fork_pos - self.push_start) >= self.travel_cap:
            self.fired_reason = "travel-cap"
            return True
        return False


def _fork_index(world: SimWorld) -> int:
    for i, (tool, _) in enumerate(world.tools):
        if tool.friction_kind == "fork":
            return i
    raise ConfigError("world has no fork tool")


def _item_positions(world: SimWorld, item_id: int) -> np.ndarray:
    sel = world.item_id == item_id
    if not sel.any():
        raise ConfigError(f"no particles carry item id {item_id}")
    return world.x[sel]


def _geometry(world: SimWorld, item_id: int, plate: PlateInfo) -> ItemGeometry:
    sel = world.item_id == item_id
    return item_geometry(world.x[sel], world.mass[sel], plate.top_y, item_id)


def _assert_clear(
    world: SimWorld, tool: ToolSDF, pose: Pose, label: str, clearance: float = 0.0
) -> None:
    """The fork at ``pose`` must not intersect any particle."""
    if world.count == 0:
        return
    phi = sdf_eval(tool, pose, world.x)
    if phi.min() <= clearance:
        raise InfeasibleActionError(
            f"{label}: fork pose intersects food (min SDF {phi.min():.4f} m)"
        )


def _horizontal_unit(vec: np.ndarray, fallback=(1.0, 0.0, 0.0)) -> np.ndarray:
    flat = np.array([vec[0], 0.0, vec[2]])
    n = np.linalg.norm(flat)
    if n < 1e-9:
        return np.asarray(fallback, dtype=np.float64)
    return flat / n


def _lowest_offset(rot: Rotation, tool: ToolSDF) -> float:
    """Lowest fork surface point relative to the pose origin, given rot.

    Checked analytically against tine endpoints and the comb span; the
    neck/handle never reach below the tines for the poses planned here.
    """
    half_span = tool.dims["comb_half_span"]
    length = tool.dims["tine_length"]
    radius = tool.dims["tine_radius"]
    m = rot.as_matrix()
    # tine centerline endpoints in local frame: (cx, -length + r .. -r, 0)
    lows = []
    for cx in (-half_span + radius, half_span - radius):
        for cy in (-length + radius, -radius):
            lows.append(m[1, 0] * cx + m[1, 1] * cy)
    return min(lows) - radius


def _descend_trajectory(
    engage: Pose,
    world: SimWorld,
    tool: ToolSDF,
    params: ActionParams,
) -> tuple[list[float], list[Pose]]:
    """Start above everything, descend vertically onto ``engage``."""
    lowest = _lowest_offset(engage.rotation, tool)
    top = world.x[:, 1].max() if world.count else engage.translation[1]
    lift = max(0.0, top + params.start_clearance - (engage.translation[1] + lowest))
    start = Pose(engage.translation + _UP * lift, engage.quat)
    t_down = max(lift / params.descend_speed, 1e-3)
    return [0.0, t_down], [start, engage]


def plan_push(
    world: SimWorld,
    item_id: int,
    direction: str,
    params: ActionParams = ActionParams(),
) -> tuple[ToolTrajectory, PushMonitor]:
    """Descend behind the item, then translate it toward ``direction``.

    The fork comes down with tines vertical and the comb broadside to the
    push, tips ending just above the plate, then translates horizontally.
    The monitor ends the push on rim/item proximity or after a full plate
    radius of travel.
    """
    if direction not in PUSH_DIRECTIONS:
        raise ConfigError(f"unknown push direction {direction!r}")
    d_hat = PUSH_DIRECTIONS[direction]
    plate = PlateInfo.from_world(world)
    fork = world.tools[_fork_index(world)][0]
    geo = _geometry(world, item_id, plate)
    pos = _item_positions(world, item_id)

    back = float(((pos - geo.centroid) @ d_hat).min())
    offset = abs(back) + fork.dims["tine_radius"] + params.approach_clearance
    behind = geo.centroid + d_hat * (-offset)
    radial = np.hypot(
        behind[0] - plate.center_xz[0], behind[2] - plate.center_xz[1]
    )
    if radial > plate.inner_radius - 0.005:
        raise InfeasibleActionError(
            f"push {direction} on item {item_id}: approach point is on the rim"
        )

    if abs(d_hat[0]) > 0.5:
        rot = Rotation.from_euler("y", 90, degrees=True)  # comb along z
    else:
        rot = Rotation.identity()  # comb along x
    engage_y = plate.top_y + params.push_tip_height + fork.dims["tine_length"]
    engage = Pose.from_rotation((behind[0], engage_y, behind[2]), rot)
    _assert_clear(world, fork, engage, f"push {direction} on item {item_id}")

    times, poses = _descend_trajectory(engage, world, fork, params)
    travel = plate.radius * 1.05
    times.append(times[-1] + travel / params.push_speed)
    poses.append(Pose(engage.translation + d_hat * travel, engage.quat))
    monitor = PushMonitor(
        item_id=item_id,
        plate=plate,
        threshold=1.5 * world.dx,
        travel_cap=plate.radius,
        push_start=engage.translation,
    )
    return ToolTrajectory(list(zip(times, poses))), monitor


def plan_cut(
    world: SimWorld,
    item_id: int,
    params: ActionParams = ActionParams(),
) -> tuple[ToolTrajectory, TerminationMonitor]:
    """Blade the fork sideways through the item centroid, then flick.

    The comb turns vertical so the stacked tines form a blade in the plane
    perpendicular to the item's (horizontal) major axis. It descends swiftly
    to just above the plate and flicks along the major axis to separate the
    halves.
    """
    plate = PlateInfo.from_world(world)
    fork = world.tools[_fork_index(world)][0]
    geo = _geometry(world, item_id, plate)
    if geo.max_height >= fork.dims["tine_length"]:
        raise ItemTooTallError(
            f"item {item_id} height {geo.max_height:.3f} m exceeds the "
            f"{fork.dims['tine_length']:.3f} m tine length"
        )

    m_hat = _horizontal_unit(geo.major_axis)
    t_hat = np.cross(_UP, m_hat)
    # columns: local x -> up (comb vertical), local y -> -t_hat (tines
    # horizontal, lying in the cut plane), local z -> m_hat
    rot = Rotation.from_matrix(np.column_stack([_UP, -t_hat, m_hat]))
    half_span = fork.dims["comb_half_span"]
    engage_y = plate.top_y + params.cut_bottom_gap + half_span
    center = geo.centroid - t_hat * (fork.dims["tine_length"] / 2.0)
    engage = Pose.from_rotation((center[0], engage_y, center[2]), rot)

    lowest = _lowest_offset(rot, fork)
    top = world.x[:, 1].max()
    lift = max(0.0, top + params.start_clearance - (engage_y + lowest))
    start = Pose(engage.translation + _UP * lift, engage.quat)
    _assert_clear(world, fork, start, f"cut on item {item_id}")
    t_down = max(lift / params.cut_speed, 1e-3)
    t_flick = params.flick_distance / params.flick_speed
    times = [0.0, t_down, t_down + t_flick]
    poses = [start, engage, Pose(engage.translation + m_hat * params.flick_distance, engage.quat)]
    return ToolTrajectory(list(zip(times, poses))), TerminationMonitor()


def plan_flip(
    world: SimWorld,
    item_id: int,
    params: ActionParams = ActionParams(),
) -> tuple[ToolTrajectory, TerminationMonitor]:
    """Rake the tines up beside the item to tip it over.

    Tines turn horizontal, parallel to the item's major axis, level at a
    fraction of the item height; the stroke runs perpendicular to the major
    axis with a slight upward pitch, long enough to carry past the item's
    thin dimension.
    """
    plate = PlateInfo.from_world(world)
    fork = world.tools[_fork_index(world)][0]
    geo = _geometry(world, item_id, plate)
    pos = _item_positions(world, item_id)

    m_hat = _horizontal_unit(geo.major_axis)
    n_hat = np.cross(_UP, m_hat)
    # columns: local x -> n_hat (comb horizontal, a flat rake), local
    # y -> -m_hat (tines run parallel to the major axis), local z -> up
    rot = Rotation.from_matrix(np.column_stack([n_hat, -m_hat, _UP]))

    span_n = float((pos @ n_hat).max() - (pos @ n_hat).min())
    side = span_n / 2.0 + fork.dims["comb_half_span"] + params.approach_clearance
    engage_y = plate.top_y + params.flip_height_fraction * geo.max_height
    center = (
        geo.centroid
        + n_hat * side
        - m_hat * (fork.dims["tine_length"] / 2.0)
    )
    engage = Pose.from_rotation((center[0], engage_y, center[2]), rot)
    _assert_clear(world, fork, engage, f"flip on item {item_id}")

    times, poses = _descend_trajectory(engage, world, fork, params)
    elev = np.deg2rad(params.flip_elevation_deg)
    stroke_dir = -n_hat * np.cos(elev) + _UP * np.sin(elev)
    travel = params.flip_travel_factor * span_n
    times.append(times[-1] + travel / params.flip_speed)
    poses.append(Pose(engage.translation + stroke_dir * travel, engage.quat))
    return ToolTrajectory(list(zip(times, poses))), TerminationMonitor()


def plan_action(
    world: SimWorld, spec: ActionSpec
) -> tuple[ToolTrajectory, TerminationMonitor]:
    if spec.kind == ActionKind.PUSH:
        return plan_push(world, spec.item_id, spec.direction, spec.params)
    if spec.kind == ActionKind.CUT:
        return plan_cut(world, spec.item_id, spec.params)
    return plan_flip(world, spec.item_id, spec.params)


def candidate_actions(
    item_id: int, params: ActionParams = ActionParams()
) -> list[ActionSpec]:
    """The fixed candidate order the planner iterates: pushes, cut, flip."""
    specs = [
        ActionSpec(ActionKind.PUSH, item_id, d, params)
        for d in ("+x", "-x", "+z", "-z")
    ]
    specs.append(ActionSpec(ActionKind.CUT, item_id, params=params))
    specs.append(ActionSpec(ActionKind.FLIP, item_id, params=params))
    return specs
