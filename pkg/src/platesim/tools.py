"""Rigid fork and plate as posed signed distance fields.

Tool shapes are analytic composites evaluated in their local frame; a Pose
places them in the world and a ToolTrajectory interpolates keyframed poses
(linear translation, spherical-linear rotation, hold-last beyond the end).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from . import _sdf
from .errors import TrajectoryError

__all__ = [
    "Pose",
    "ToolSDF",
    "ToolTrajectory",
    "fork_sdf",
    "plate_sdf",
    "slab_sdf",
    "sphere_sdf",
    "sdf_eval",
    "sdf_normal",
    "pose_at",
    "velocity_at",
    "static_trajectory",
    "DEFAULT_DX",
]

DEFAULT_DX = 0.5 / 64


@dataclass(frozen=True)
class Pose:
    """Rigid placement: translation plus a unit quaternion (x, y, z, w)."""

    translation: np.ndarray
    quat: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        q = np.asarray(self.quat, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("quaternion must be unit length")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quat", q)

    @classmethod
    def identity(cls, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(translation, dtype=np.float64), np.array([0.0, 0.0, 0.0, 1.0]))

    @classmethod
    def from_rotation(cls, translation, rotation: Rotation) -> "Pose":
        return cls(np.asarray(translation, dtype=np.float64), rotation.as_quat())

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quat)

    def matrix(self) -> np.ndarray:
        return self.rotation.as_matrix()


@dataclass(frozen=True)
class ToolSDF:
    """An analytic tool shape: numba kind code + parameter record.

    ``dims`` keeps the human-readable dimensions (tine spacing, rim height,
    and so on) that the action planners read.
    """

    name: str
    kind: int
    params: np.ndarray
    friction_kind: str  # 'plate' or 'fork': selects the friction channel
    dims: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.friction_kind not in ("plate", "fork"):
            raise ValueError("friction_kind must be 'plate' or 'fork'")
        object.__setattr__(
            self, "params", np.ascontiguousarray(self.params, dtype=np.float64)
        )


def fork_sdf(
    tines: int = 4,
    tine_length: float = 0.035,
    tine_radius: float = 0.001,
    tine_spacing: float = 0.005,
    neck_thickness: float = 0.010,
    handle_length: float = 0.08,
    blend: float = 0.0,
) -> ToolSDF:
    """Feeding fork: a comb of vertical tine capsules under a neck and handle.

    With the identity pose the tines point down, tips at y = -tine_length.
    """
    half_span = 0.5 * (tines - 1) * tine_spacing + tine_radius
    neck_half = (half_span, neck_thickness / 2, 0.0015)
    handle_half = (0.004, handle_length / 2, 0.003)
    handle_center_y = neck_thickness + handle_length / 2
    params = np.array(
        [
            float(tines), tine_length, tine_radius, tine_spacing,
            *neck_half, *handle_half, handle_center_y, blend,
        ]
    )
    dims = {
        "tines": tines,
        "tine_length": tine_length,
        "tine_radius": tine_radius,
        "tine_spacing": tine_spacing,
        "comb_half_span": half_span,
        "neck_thickness": neck_thickness,
        "handle_length": handle_length,
    }
    return ToolSDF("fork", _sdf.FORK, params, "fork", dims)


def plate_sdf(
    radius: float = 0.12,
    rim_height: float = 0.015,
    base_thickness: float = 0.010,
    blend: float = 0.0,
) -> ToolSDF:
    """Plate: disc base (top surface at local y = 0) with a torus rim."""
    tube = rim_height / 2
    params = np.array([radius, base_thickness / 2, tube, blend])
    dims = {
        "radius": radius,
        "rim_height": rim_height,
        "base_thickness": base_thickness,
        "rim_tube_radius": tube,
        # radial position of the rim's inner wall; food lives inside this
        "inner_radius": radius - 2 * tube,
    }
    return ToolSDF("plate", _sdf.PLATE, params, "plate", dims)


def slab_sdf(half_extents=(0.2, 0.01, 0.2), friction_kind: str = "plate") -> ToolSDF:
    hx, hy, hz = half_extents
    return ToolSDF(
        "slab",
        _sdf.SLAB,
        np.array([hx, hy, hz]),
        friction_kind,
        {"half_extents": tuple(half_extents)},
    )


def sphere_sdf(radius: float, friction_kind: str = "fork") -> ToolSDF:
    return ToolSDF("sphere", _sdf.SPHERE, np.array([radius]), friction_kind, {"radius": radius})


def sdf_eval(tool: ToolSDF, pose: Pose, points: np.ndarray) -> np.ndarray:
    """Signed distance at world points; negative inside the tool."""
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    out = np.empty(len(pts))
    _sdf.eval_points(tool.kind, tool.params, pose.matrix(), pose.translation, pts, out)
    return out if np.asarray(points).ndim > 1 else out[0]


def sdf_normal(
    tool: ToolSDF, pose: Pose, points: np.ndarray, dx: float = DEFAULT_DX
) -> np.ndarray:
    """Outward unit normal by central differences with step 1e-4 * dx."""
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    out = np.empty_like(pts)
    _sdf.eval_normals(
        tool.kind, tool.params, pose.matrix(), pose.translation, pts, 1e-4 * dx, out
    )
    return out if np.asarray(points).ndim > 1 else out[0]


class ToolTrajectory:
    """Keyframed rigid motion starting at t = 0, holding the last pose."""

    def __init__(self, keyframes: list[tuple[float, Pose]]):
        if not keyframes:
            raise TrajectoryError("trajectory needs at least one keyframe")
        times = [float(t) for t, _ in keyframes]
        if times[0] != 0.0:
            raise TrajectoryError("trajectory must start at t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise TrajectoryError("keyframe times must be strictly increasing")
        self.times = times
        self.poses = [p for _, p in keyframes]

    @property
    def duration(self) -> float:
        return self.times[-1]

    def _segment(self, t: float) -> int:
        """Index i such that times[i] <= t < times[i+1]."""
        i = bisect.bisect_right(self.times, t) - 1
        return min(max(i, 0), len(self.times) - 2)

    def pose_at(self, t: float) -> Pose:
        if t <= self.times[0]:
            return self.poses[0]
        if t >= self.times[-1]:
            return self.poses[-1]
        i = self._segment(t)
        t0, t1 = self.times[i], self.times[i + 1]
        s = (t - t0) / (t1 - t0)
        p0, p1 = self.poses[i], self.poses[i + 1]
        trans = (1 - s) * p0.translation + s * p1.translation
        rots = Rotation.from_quat([p0.quat, p1.quat])
        rot = Slerp([0.0, 1.0], rots)(s)
        return Pose.from_rotation(trans, rot)

    def motion_at(self, t: float) -> tuple[Pose, np.ndarray, np.ndarray]:
        """Pose plus rigid (linear velocity, angular velocity) at time t.

        Velocities are finite differences of the segment's keyframes, zero
        at or beyond the final keyframe.
        """
        pose = self.pose_at(t)
        if len(self.times) == 1 or t >= self.times[-1]:
            return pose, np.zeros(3), np.zeros(3)
        i = self._segment(t)
        t0, t1 = self.times[i], self.times[i + 1]
        p0, p1 = self.poses[i], self.poses[i + 1]
        dt = t1 - t0
        v_lin = (p1.translation - p0.translation) / dt
        relative = p1.rotation * p0.rotation.inv()
        omega = relative.as_rotvec() / dt
        return pose, v_lin, omega

    def velocity_at(self, t: float, points: np.ndarray) -> np.ndarray:
        """Rigid velocity field v = v_lin + omega x (x - c) at world points."""
        pose, v_lin, omega = self.motion_at(t)
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        v = v_lin + np.cross(omega, pts - pose.translation)
        return v if np.asarray(points).ndim > 1 else v[0]


def pose_at(traj: ToolTrajectory, t: float) -> Pose:
    return traj.pose_at(t)


def velocity_at(traj: ToolTrajectory, t: float, points: np.ndarray) -> np.ndarray:
    return traj.velocity_at(t, points)


def static_trajectory(pose: Pose) -> ToolTrajectory:
    """A tool that never moves (single keyframe at t = 0)."""
    return ToolTrajectory([(0.0, pose)])
