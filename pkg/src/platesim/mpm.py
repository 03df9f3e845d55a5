"""MLS-MPM world state and time stepping.

The stepper is the classic three-phase loop: scatter particle mass and
APIC momentum (with a fused stress term) to a dense grid, update grid
velocities with gravity plus Coulomb contact against tool SDFs, then
gather back, advect, and update each deformation gradient per its
constitutive class. Grid scatter order is fixed, so repeated runs are
bit-identical.

Checkpoint layout (all little-endian, written by :func:`save_checkpoint`):

    bytes 0-3    magic b"PSCK"
    u32          format version (1)
    u64          particle count n
    u64          step count
    f64          simulation time (s)
    f64[n, 3]    positions
    f64[n, 3]    velocities
    f64[n, 3, 3] affine velocity matrices C
    f64[n, 3, 3] deformation gradients F
    f64[n]       plastic volume ratios J
    f64[n]       particle masses
    f64[n]       particle rest volumes
    i32[n]       material ids
    i32[n]       item ids

Materials and tools are configuration, not state; loading a checkpoint
into a world rebuilt from the same config resumes bit-identically.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (
    BlowupError,
    CFLError,
    ConfigError,
    InversionError,
    SimulationError,
)
from .materials import MaterialParams, ModelClass, corotated_energy
from .recon import ParticleSet
from .tools import ToolSDF, ToolTrajectory

__all__ = [
    "SimWorld",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = b"PSCK"
CHECKPOINT_VERSION = 1

_TOOL_PARAM_WIDTH = 12


class SimWorld:
    """Particles, grid scratch, materials, and kinematic tools.

    A world is exclusively owned while stepping; distinct worlds step
    concurrently with no shared state, which is what parallel action
    rollouts rely on.
    """

    def __init__(
        self,
        domain_size: float = 0.5,
        grid_dims: int = 64,
        dt: float = 2e-4,
        gravity=(0.0, -9.81, 0.0),
    ):
        if domain_size <= 0:
            raise ConfigError("domain_size must be positive")
        if grid_dims < 8:
            raise ConfigError("grid_dims must be at least 8")
        if dt <= 0:
            raise ConfigError("dt must be positive")
        self.domain_size = float(domain_size)
        self.grid_dims = int(grid_dims)
        self.dx = self.domain_size / self.grid_dims
        self.dt = float(dt)
        self.gravity = np.asarray(gravity, dtype=np.float64).reshape(3).copy()
        self.t = 0.0
        self.step_count = 0

        self.x = np.zeros((0, 3))
        self.v = np.zeros((0, 3))
        self.C = np.zeros((0, 3, 3))
        self.F = np.zeros((0, 3, 3))
        self.Jp = np.zeros(0)
        self.mass = np.zeros(0)
        self.vol = np.zeros(0)
        self.material_id = np.zeros(0, dtype=np.int32)
        self.item_id = np.zeros(0, dtype=np.int32)

        self.materials: list[MaterialParams] = []
        self.tools: list[tuple[ToolSDF, ToolTrajectory]] = []

        n = self.grid_dims
        self.grid_m = np.zeros((n, n, n))
        self.grid_v = np.zeros((n, n, n, 3))
        self._grid_fric_plate = np.zeros((n, n, n))
        self._grid_fric_fork = np.zeros((n, n, n))
        self._mat_arrays = None

    # ------------------------------------------------------------------
    # construction

    @property
    def count(self) -> int:
        return len(self.x)

    def register_material(self, params: MaterialParams) -> int:
        """Return the id for ``params``, adding it to the table if new."""
        for i, existing in enumerate(self.materials):
            if existing == params:
                return i
        self.materials.append(params)
        self._mat_arrays = None
        return len(self.materials) - 1

    def add_particles(
        self,
        positions: np.ndarray,
        material: MaterialParams,
        item_id: int,
        particle_mass: float,
        particle_volume: float,
        velocity=(0.0, 0.0, 0.0),
    ) -> None:
        """Append particles at rest (F = I) with uniform mass and volume."""
        pos = np.ascontiguousarray(positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ConfigError("positions must be (n, 3)")
        if particle_mass <= 0 or particle_volume <= 0:
            raise ConfigError("particle mass and volume must be positive")
        margin = 2.0 * self.dx
        lo = pos.min(axis=0, initial=np.inf)
        hi = pos.max(axis=0, initial=-np.inf)
        if len(pos) and (lo.min() < margin or hi.max() > self.domain_size - margin):
            raise ConfigError(
                "particles must lie inside the domain shrunk by a 2*dx margin; "
                f"got extent [{lo.min():.4f}, {hi.max():.4f}] in a "
                f"{self.domain_size:.3f} m domain"
            )
        mid = self.register_material(material)
        npts = len(pos)
        self.x = np.concatenate([self.x, pos])
        self.v = np.concatenate(
            [self.v, np.tile(np.asarray(velocity, dtype=np.float64), (npts, 1))]
        )
        self.C = np.concatenate([self.C, np.zeros((npts, 3, 3))])
        self.F = np.concatenate([self.F, np.tile(np.eye(3), (npts, 1, 1))])
        self.Jp = np.concatenate([self.Jp, np.ones(npts)])
        self.mass = np.concatenate([self.mass, np.full(npts, float(particle_mass))])
        self.vol = np.concatenate([self.vol, np.full(npts, float(particle_volume))])
        self.material_id = np.concatenate(
            [self.material_id, np.full(npts, mid, dtype=np.int32)]
        )
        self.item_id = np.concatenate(
            [self.item_id, np.full(npts, int(item_id), dtype=np.int32)]
        )

    def add_particle_set(self, pset: ParticleSet, offset=(0.0, 0.0, 0.0)) -> None:
        """Place a reconstructed item; offset shifts mesh-local coordinates."""
        self.add_particles(
            pset.positions + np.asarray(offset, dtype=np.float64),
            pset.material,
            pset.item_id,
            particle_mass=pset.mass,
            particle_volume=pset.volume,
        )

    def add_tool(self, tool: ToolSDF, trajectory: ToolTrajectory) -> int:
        self.tools.append((tool, trajectory))
        return len(self.tools) - 1

    def clone(self) -> "SimWorld":
        """Independent copy for rollouts (arrays copied, configs shared)."""
        other = SimWorld(self.domain_size, self.grid_dims, self.dt, self.gravity)
        other.t = self.t
        other.step_count = self.step_count
        other.x = self.x.copy()
        other.v = self.v.copy()
        other.C = self.C.copy()
        other.F = self.F.copy()
        other.Jp = self.Jp.copy()
        other.mass = self.mass.copy()
        other.vol = self.vol.copy()
        other.material_id = self.material_id.copy()
        other.item_id = self.item_id.copy()
        other.materials = list(self.materials)
        other.tools = list(self.tools)
        return other

    # ------------------------------------------------------------------
    # stepping

    def _material_arrays(self):
        if self._mat_arrays is None or self._mat_arrays[0].shape[0] != len(self.materials):
            mats = self.materials
            self._mat_arrays = (
                np.array([m.model_class for m in mats], dtype=np.int32),
                np.array([m.lame_mu for m in mats]),
                np.array([m.lame_lambda for m in mats]),
                np.array([m.kappa for m in mats]),
                np.array([m.yield_stress or 0.0 for m in mats]),
                np.array([m.friction_mu_plate for m in mats]),
                np.array([m.friction_mu_fork for m in mats]),
            )
        return self._mat_arrays

    def _tool_arrays(self):
        ntools = len(self.tools)
        kind = np.zeros(ntools, dtype=np.int32)
        params = np.zeros((ntools, _TOOL_PARAM_WIDTH))
        fric = np.zeros(ntools, dtype=np.int32)
        rot = np.zeros((ntools, 3, 3))
        trans = np.zeros((ntools, 3))
        vlin = np.zeros((ntools, 3))
        omega = np.zeros((ntools, 3))
        for i, (tool, traj) in enumerate(self.tools):
            kind[i] = tool.kind
            params[i, : len(tool.params)] = tool.params
            fric[i] = (
                _kernels.FRICTION_FORK
                if tool.friction_kind == "fork"
                else _kernels.FRICTION_PLATE
            )
            pose, v_lin, w = traj.motion_at(self.t)
            rot[i] = pose.rotation.as_matrix()
            trans[i] = pose.translation
            vlin[i] = v_lin
            omega[i] = w
        return kind, params, fric, rot, trans, vlin, omega

    def _raise_particle_error(self, status: int, pid: int) -> None:
        if status == _kernels.ERR_STENCIL:
            raise BlowupError(particle_id=pid, step=self.step_count)
        if status == _kernels.ERR_INVERTED:
            raise InversionError(particle_id=pid, step=self.step_count)
        raise SimulationError(f"unknown kernel status {status}")

    def p2g(self) -> None:
        """Scatter mass and APIC momentum (with stress) to the grid."""
        if not len(self.materials):
            raise ConfigError("world has no materials")
        cls, mu, lam, kappa, ys, fp, ff = self._material_arrays()
        status, pid = _kernels.p2g(
            self.x, self.v, self.C, self.F, self.Jp, self.mass, self.vol,
            self.material_id,
            cls, mu, lam, kappa, fp, ff,
            self.grid_m, self.grid_v, self._grid_fric_plate, self._grid_fric_fork,
            self.dx, self.dt, self.grid_dims,
        )
        if status != _kernels.OK:
            self._raise_particle_error(status, pid)

    def grid_update(self) -> None:
        """Momentum to velocity, gravity, tool friction, sticky walls."""
        kind, params, fric, rot, trans, vlin, omega = self._tool_arrays()
        _kernels.grid_update(
            self.grid_m, self.grid_v, self._grid_fric_plate, self._grid_fric_fork,
            self.dx, self.dt, self.gravity,
            kind, params, fric, rot, trans, vlin, omega,
            self.grid_dims,
        )

    def g2p(self) -> float:
        """Gather velocities, advect, update F; returns max particle speed."""
        cls, mu, lam, kappa, ys, fp, ff = self._material_arrays()
        status, pid, max_speed = _kernels.g2p(
            self.x, self.v, self.C, self.F, self.Jp, self.material_id,
            cls, mu, ys,
            self.grid_v, self.dx, self.dt, self.grid_dims,
        )
        if status != _kernels.OK:
            self._raise_particle_error(status, pid)
        return max_speed

    def step(self) -> None:
        """Advance one timestep; tools are posed at the step's start time."""
        self.p2g()
        self.grid_update()
        max_speed = self.g2p()
        if max_speed * self.dt > 0.5 * self.dx:
            raise CFLError(
                f"max particle speed {max_speed:.3f} m/s violates "
                f"CFL bound {0.5 * self.dx / self.dt:.3f} m/s at step "
                f"{self.step_count}; reduce dt"
            )
        self.t += self.dt
        self.step_count += 1

    def run(self, duration: float, progress=None) -> "SimWorld":
        """Apply ceil(duration / dt) steps, invoking ``progress`` per step."""
        nsteps = max(0, math.ceil(duration / self.dt - 1e-9))
        for i in range(nsteps):
            self.step()
            if progress is not None:
                progress(i + 1, nsteps, self)
        return self

    # ------------------------------------------------------------------
    # diagnostics

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def momentum(self) -> np.ndarray:
        return (self.mass[:, None] * self.v).sum(axis=0)

    def com(self) -> np.ndarray:
        m = self.total_mass()
        if m == 0:
            raise SimulationError("world has no particles")
        return (self.mass[:, None] * self.x).sum(axis=0) / m

    def kinetic_energy(self) -> float:
        return float(0.5 * (self.mass * (self.v**2).sum(axis=1)).sum())

    def potential_energy(self) -> float:
        """Gravitational potential relative to the domain origin."""
        return float(-(self.mass[:, None] * self.x).sum(axis=0) @ self.gravity)

    def elastic_energy(self) -> float:
        total = 0.0
        for mid, mat in enumerate(self.materials):
            sel = self.material_id == mid
            if not sel.any():
                continue
            if mat.model_class == ModelClass.PLASTIC:
                j = self.Jp[sel]
                total += float(
                    (0.5 * mat.kappa * (j - 1.0) ** 2 * self.vol[sel]).sum()
                )
            else:
                for f, v0 in zip(self.F[sel], self.vol[sel]):
                    total += corotated_energy(f, mat) * v0
        return total


def save_checkpoint(world: SimWorld, path) -> None:
    """Write the particle state record documented in the module docstring."""
    n = world.count
    header = CHECKPOINT_MAGIC + struct.pack(
        "<IQQd", CHECKPOINT_VERSION, n, world.step_count, world.t
    )
    blobs = [header]
    for arr in (world.x, world.v, world.C, world.F, world.Jp, world.mass, world.vol):
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for arr in (world.material_id, world.item_id):
        blobs.append(np.ascontiguousarray(arr, dtype="<i4").tobytes())
    Path(path).write_bytes(b"".join(blobs))


def read_checkpoint(path) -> dict:
    """Parse a checkpoint file into a dict of arrays plus time metadata."""
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file (bad magic)")
    version, n, step_count, t = struct.unpack_from("<IQQd", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<IQQd")

    def take(shape, dtype):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr.reshape(shape).astype(dtype.lstrip("<"), copy=True)

    out = {
        "version": version,
        "step_count": step_count,
        "t": t,
        "x": take((n, 3), "<f8"),
        "v": take((n, 3), "<f8"),
        "C": take((n, 3, 3), "<f8"),
        "F": take((n, 3, 3), "<f8"),
        "Jp": take((n,), "<f8"),
        "mass": take((n,), "<f8"),
        "vol": take((n,), "<f8"),
        "material_id": take((n,), "<i4"),
        "item_id": take((n,), "<i4"),
    }
    if off != len(raw):
        raise ConfigError(f"{path}: trailing bytes in checkpoint")
    return out


def load_checkpoint(world: SimWorld, path) -> SimWorld:
    """Replace ``world``'s particle state with the checkpoint contents."""
    data = read_checkpoint(path)
    if len(world.materials) and data["material_id"].size:
        if data["material_id"].max(initial=0) >= len(world.materials):
            raise ConfigError(
                "checkpoint references material ids beyond the world's table"
            )
    world.x = data["x"]
    world.v = data["v"]
    world.C = data["C"]
    world.F = data["F"]
    world.Jp = data["Jp"]
    world.mass = data["mass"]
    world.vol = data["vol"]
    world.material_id = data["material_id"]
    world.item_id = data["item_id"]
    world.t = data["t"]
    world.step_count = data["step_count"]
    return world
