"""Orthographic top-down depth and mask rendering from particle state.

Each particle splats as a sphere of radius 0.5 * V_p^(1/3); a pixel keeps
the highest splat top surface and the item id that produced it. This is
exactly the heightfield representation the reconstruction and estimator
modules consume, so a render can be fed straight back through them.

Rendering here is the expensive observation step, which is why rollouts
take a policy: on-demand renders once at the end, every-step renders the
initial state and then after every step. The final frames agree bit for
bit; only the work differs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .depthio import DepthMap, SegMask
from .errors import ConfigError
from .mpm import SimWorld
from .tools import ToolTrajectory, static_trajectory

__all__ = [
    "CameraSpec",
    "RenderMode",
    "RenderPolicy",
    "RolloutResult",
    "render_frame",
    "render_depth",
    "render_masks",
    "rollout_with_policy",
]


@dataclass(frozen=True)
class CameraSpec:
    """Orthographic top-down camera over a square pixel lattice.

    Pixel (row r, col c) samples world point
    (origin_xz[0] + c * pixel_pitch, origin_xz[1] + r * pixel_pitch),
    the same convention the reconstruction lattice uses. Heights are
    measured above ``plane_y`` and clamped to the far plane.
    """

    width: int = 128
    height: int = 128
    pixel_pitch: float = 0.24 / 128
    origin_xz: tuple[float, float] = (0.0, 0.0)
    plane_y: float = 0.0
    far: float = 0.25

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ConfigError("camera needs at least 2x2 pixels")
        if self.pixel_pitch <= 0:
            raise ConfigError("pixel_pitch must be positive")
        if self.far <= 0:
            raise ConfigError("far plane must be above the reference plane")

    @classmethod
    def over_plate(
        cls,
        center_xz: tuple[float, float],
        plane_y: float,
        span: float = 0.24,
        width: int = 128,
        height: int = 128,
        far: float = 0.25,
    ) -> "CameraSpec":
        """Camera centered on the plate, covering ``span`` meters across."""
        pitch = span / width
        ox = center_xz[0] - 0.5 * (width - 1) * pitch
        oz = center_xz[1] - 0.5 * (height - 1) * pitch
        return cls(
            width=width,
            height=height,
            pixel_pitch=pitch,
            origin_xz=(ox, oz),
            plane_y=plane_y,
            far=far,
        )


class RenderMode(enum.Enum):
    ON_DEMAND = "on-demand"
    EVERY_STEP = "every-step"


@dataclass
class RenderPolicy:
    """When to rasterize during a rollout; counts actual raster calls."""

    mode: RenderMode = RenderMode.ON_DEMAND
    render_count: int = 0

    @classmethod
    def from_name(cls, name: str) -> "RenderPolicy":
        try:
            return cls(mode=RenderMode(name))
        except ValueError:
            raise ConfigError(
                f"unknown render mode {name!r}; use 'on-demand' or 'every-step'"
            ) from None


def render_frame(world: SimWorld, camera: CameraSpec) -> tuple[DepthMap, SegMask]:
    """Rasterize depth and mask in one pass; never mutates the world."""
    depth = np.zeros((camera.height, camera.width))
    label = np.zeros((camera.height, camera.width), dtype=np.int32)
    if world.count:
        _kernels.splat_heightfield(
            world.x,
            world.vol,
            world.item_id,
            camera.plane_y,
            camera.origin_xz[0],
            camera.origin_xz[1],
            camera.pixel_pitch,
            camera.width,
            camera.height,
            depth,
            label,
        )
        np.minimum(depth, camera.far, out=depth)
    return DepthMap(depth, camera.pixel_pitch), SegMask(label)


def render_depth(world: SimWorld, camera: CameraSpec) -> DepthMap:
    return render_frame(world, camera)[0]


def render_masks(world: SimWorld, camera: CameraSpec) -> SegMask:
    return render_frame(world, camera)[1]


@dataclass(frozen=True)
class _ShiftedTrajectory:
    """View of a trajectory whose keyframe times start at ``t0``."""

    inner: ToolTrajectory
    t0: float

    @property
    def duration(self) -> float:
        return self.inner.duration

    def pose_at(self, t: float):
        return self.inner.pose_at(t - self.t0)

    def motion_at(self, t: float):
        return self.inner.motion_at(t - self.t0)


@dataclass(frozen=True)
class RolloutResult:
    world: SimWorld
    depth: DepthMap
    mask: SegMask
    render_count: int
    steps: int
    monitor_fired: bool
    fired_time: Optional[float]


def rollout_with_policy(
    world: SimWorld,
    trajectory: Optional[ToolTrajectory],
    policy: RenderPolicy,
    camera: CameraSpec,
    tool_index: Optional[int] = None,
    duration: Optional[float] = None,
    monitor: Optional[Callable[[SimWorld], bool]] = None,
    settle_time: float = 0.0,
    probe: Optional[Callable[[SimWorld], None]] = None,
) -> RolloutResult:
    """Drive one tool along ``trajectory``, rendering per the policy.

    The trajectory's clock is rebased to the world's current time. A
    monitor is checked before the first step and after every step; when
    it fires, the tool freezes at its current pose and the remaining
    motion is dropped, after which ``settle_time`` elapses tool-still.
    ``probe`` is a read-only observer invoked after every step.
    """
    if trajectory is not None:
        if tool_index is None:
            forks = [
                i for i, (tool, _) in enumerate(world.tools)
                if tool.friction_kind == "fork"
            ]
            if not forks:
                raise ConfigError(
                    "world has no fork-friction tool to bind the trajectory to"
                )
            tool_index = forks[0]
        tool = world.tools[tool_index][0]
        world.tools[tool_index] = (tool, _ShiftedTrajectory(trajectory, world.t))
        if duration is None:
            duration = trajectory.duration + settle_time
    elif duration is None:
        raise ConfigError("rollout needs a trajectory or an explicit duration")

    renders = 0

    def raster():
        nonlocal renders
        renders += 1
        policy.render_count += 1
        return render_frame(world, camera)

    frame = None
    if policy.mode is RenderMode.EVERY_STEP:
        frame = raster()

    nsteps = max(0, int(np.ceil(duration / world.dt - 1e-9)))
    fired = False
    fired_time = None
    if monitor is not None and monitor(world):
        fired = True
        fired_time = world.t
        nsteps = max(0, int(np.ceil(settle_time / world.dt - 1e-9)))
        if trajectory is not None:
            _freeze_tool(world, tool_index)
    steps_taken = 0
    remaining = nsteps
    while remaining > 0:
        world.step()
        steps_taken += 1
        remaining -= 1
        if probe is not None:
            probe(world)
        if policy.mode is RenderMode.EVERY_STEP:
            frame = raster()
        if not fired and monitor is not None and monitor(world):
            fired = True
            fired_time = world.t
            if trajectory is not None:
                _freeze_tool(world, tool_index)
            remaining = max(0, int(np.ceil(settle_time / world.dt - 1e-9)))
    if policy.mode is RenderMode.ON_DEMAND or frame is None:
        frame = raster()
    depth, mask = frame
    return RolloutResult(
        world=world,
        depth=depth,
        mask=mask,
        render_count=renders,
        steps=steps_taken,
        monitor_fired=fired,
        fired_time=fired_time,
    )


def _freeze_tool(world: SimWorld, tool_index: int) -> None:
    tool, traj = world.tools[tool_index]
    pose = traj.pose_at(world.t)
    world.tools[tool_index] = (tool, static_trajectory(pose))
