"""Scene assembly: YAML config in, ready-to-run world out.

A scene file is a single YAML document. All blocks are optional except
``items``; omitted fields take the defaults shown:

    name: my-scene
    seed: 0
    domain_size: 0.5          # cubic domain edge (m)
    grid_dims: 64             # grid nodes per axis
    dt: 2.0e-4                # timestep (s)
    gravity: [0.0, -9.81, 0.0]
    settle_time: 0.25         # free run before any observation (s)
    plate:                    # null for plate-free scenes
      center: [0.25, 0.25]    # plate axis in world x/z (default domain middle)
      top_y: 0.1              # plate surface height (m)
      radius: 0.12
      rim_height: 0.015
      base_thickness: 0.01
    fork:
      tines: 4
      tine_length: 0.035
      tine_radius: 0.001
      tine_spacing: 0.005
      neck_thickness: 0.01
      handle_length: 0.08
      park: [x, y, z]         # parked pose; default is beside the plate
    camera:
      width: 128
      height: 128
      span: 0.24              # world width covered; pitch = span / width
      plane_y: <plate top>    # height reference for rendered depth
      far: 0.25
    recon:
      width: 72               # per-item synthetic depth lattice
      height: 72
      pitch: 1.25e-3
    render_mode: on-demand    # or every-step
    items:
      - id: 1                 # positive, unique
        category: banana      # material registry key
        center: [0.0, 0.0]    # offset from the plate axis in x/z (m)
        rotate_deg: 0.0       # footprint rotation about +y
        lift: 0.001           # spawn gap above the plate top (m)
        base_y: null          # absolute base height; overrides plate + lift
        material: {}          # MaterialParams overrides
        source:
          kind: disc_on_edge  # box|cylinder|disc_on_edge|cone_pile|hemisphere|heightmap
          radius: 0.015
          thickness: 0.008
        seed: null            # default: scene seed + item id
    estimator: {}             # EstimatorConfig overrides
    planner: {}               # PlannerConfig overrides
    actions: {}               # ActionParams overrides

Synthetic sources are evaluated on the recon lattice, centered, and fed
through the same depth-to-particles path as ingested heightmaps, so a
scene built from primitives is indistinguishable from one built from
camera data downstream.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml

from .actions import ActionParams, PlateInfo
from .depthio import DepthMap, mask_depth, read_pfm, read_pgm
from .errors import ConfigError
from .estimator import (
    EstimatorConfig,
    ItemObservation,
    SuccessEstimate,
    estimate_for,
    observe_items,
)
from .materials import MaterialParams, material_for
from .mpm import SimWorld
from .planner import PlannerConfig, RolloutRun, make_rollout_fn
from .recon import (
    FoodMesh,
    ParticleSet,
    close_and_volume,
    deform_template,
    sample_particles,
    template_for,
)
from .render import CameraSpec, RenderMode, render_frame
from .tools import Pose, fork_sdf, plate_sdf, static_trajectory

__all__ = [
    "ItemSpec",
    "SceneConfig",
    "SceneBundle",
    "build_scene",
    "synthetic_depth",
    "canonical_scene",
    "canonical_scene_names",
]

_PLATE_DEFAULTS = {
    "center": None,  # filled with the domain middle
    "top_y": 0.1,
    "radius": 0.12,
    "rim_height": 0.015,
    "base_thickness": 0.01,
}

_FORK_DEFAULTS = {
    "tines": 4,
    "tine_length": 0.035,
    "tine_radius": 0.001,
    "tine_spacing": 0.005,
    "neck_thickness": 0.01,
    "handle_length": 0.08,
    "park": None,
}

_CAMERA_DEFAULTS = {"width": 128, "height": 128, "span": 0.24, "plane_y": None, "far": 0.25}

_RECON_DEFAULTS = {"width": 72, "height": 72, "pitch": 1.25e-3}

_SOURCE_FIELDS = {
    "box": {"size"},
    "cylinder": {"radius", "height"},
    "disc_on_edge": {"radius", "thickness"},
    "cone_pile": {"radius", "height"},
    "hemisphere": {"radius"},
    "heightmap": {"path", "mask", "label", "pitch"},
}


def _require_keys(block: dict, allowed, where: str) -> None:
    bad = set(block) - set(allowed)
    if bad:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(bad)}")


def _merged(defaults: dict, block: Optional[dict], where: str) -> dict:
    block = {} if block is None else dict(block)
    _require_keys(block, defaults, where)
    out = dict(defaults)
    out.update(block)
    for key, value in out.items():
        # tolerate YAML 1.1 parsers reading "5.0e8" as a string
        if isinstance(value, str):
            try:
                out[key] = float(value)
            except ValueError:
                raise ConfigError(f"{where}.{key} must be numeric, got {value!r}") from None
    return out


@dataclass(frozen=True)
class ItemSpec:
    """One food item: a depth-map source plus placement and material."""

    item_id: int
    category: str
    source: dict
    center: tuple[float, float] = (0.0, 0.0)
    rotate_deg: float = 0.0
    lift: float = 0.001
    base_y: Optional[float] = None
    material: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.item_id <= 0:
            raise ConfigError(f"item id must be positive, got {self.item_id}")
        kind = self.source.get("kind")
        if kind not in _SOURCE_FIELDS:
            raise ConfigError(
                f"item {self.item_id}: unknown source kind {kind!r}; "
                f"expected one of {sorted(_SOURCE_FIELDS)}"
            )
        extra = set(self.source) - _SOURCE_FIELDS[kind] - {"kind"}
        if extra:
            raise ConfigError(f"item {self.item_id}: unknown source field(s) {sorted(extra)}")

    @classmethod
    def from_dict(cls, data: dict) -> "ItemSpec":
        _require_keys(
            data,
            {"id", "category", "center", "rotate_deg", "lift", "base_y", "material", "source", "seed"},
            "item",
        )
        try:
            item_id = int(data["id"])
            category = str(data["category"])
            source = dict(data["source"])
        except KeyError as exc:
            raise ConfigError(f"item is missing required field {exc}") from None
        center = data.get("center", (0.0, 0.0))
        if len(center) != 2:
            raise ConfigError(f"item {item_id}: center must be [x, z]")
        return cls(
            item_id=item_id,
            category=category,
            source=source,
            center=(float(center[0]), float(center[1])),
            rotate_deg=float(data.get("rotate_deg", 0.0)),
            lift=float(data.get("lift", 0.001)),
            base_y=None if data.get("base_y") is None else float(data["base_y"]),
            material=dict(data.get("material", {})),
            seed=None if data.get("seed") is None else int(data["seed"]),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.item_id,
            "category": self.category,
            "center": list(self.center),
            "rotate_deg": self.rotate_deg,
            "lift": self.lift,
            "base_y": self.base_y,
            "material": dict(self.material),
            "source": dict(self.source),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SceneConfig:
    """Validated scene description; the unit of reproducibility.

    Everything a run depends on hangs off this object, so its canonical
    YAML dump (see :meth:`scene_hash`) identifies a scene exactly.
    """

    name: str = "scene"
    seed: int = 0
    domain_size: float = 0.5
    grid_dims: int = 64
    dt: float = 2.0e-4
    gravity: tuple[float, float, float] = (0.0, -9.81, 0.0)
    settle_time: float = 0.25
    plate: Optional[dict] = field(default_factory=lambda: dict(_PLATE_DEFAULTS))
    fork: dict = field(default_factory=lambda: dict(_FORK_DEFAULTS))
    camera: dict = field(default_factory=lambda: dict(_CAMERA_DEFAULTS))
    recon: dict = field(default_factory=lambda: dict(_RECON_DEFAULTS))
    render_mode: str = "on-demand"
    items: tuple[ItemSpec, ...] = ()
    estimator: EstimatorConfig = EstimatorConfig()
    planner: PlannerConfig = PlannerConfig()
    actions: ActionParams = ActionParams()

    def __post_init__(self):
        if self.grid_dims < 8:
            raise ConfigError(f"grid_dims must be at least 8, got {self.grid_dims}")
        if not (self.domain_size > 0 and self.dt > 0):
            raise ConfigError("domain_size and dt must be positive")
        if self.settle_time < 0:
            raise ConfigError("settle_time must be non-negative")
        if self.render_mode not in ("on-demand", "every-step"):
            raise ConfigError(f"render_mode must be on-demand or every-step, got {self.render_mode!r}")
        seen = set()
        for item in self.items:
            if item.item_id in seen:
                raise ConfigError(f"duplicate item id {item.item_id}")
            seen.add(item.item_id)
            material_for(item.category, item.material)  # resolves or raises

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        _require_keys(
            data,
            {
                "name", "seed", "domain_size", "grid_dims", "dt", "gravity",
                "settle_time", "plate", "fork", "camera", "recon",
                "render_mode", "items", "estimator", "planner", "actions",
            },
            "scene",
        )
        domain = float(data.get("domain_size", 0.5))
        plate = data.get("plate", {})
        if plate is not None:
            plate = _merged(_PLATE_DEFAULTS, plate, "plate")
            if plate["center"] is None:
                plate["center"] = [domain / 2, domain / 2]
            plate["center"] = [float(plate["center"][0]), float(plate["center"][1])]
        gravity = data.get("gravity", (0.0, -9.81, 0.0))
        if len(gravity) != 3:
            raise ConfigError("gravity must be [gx, gy, gz]")
        items = tuple(ItemSpec.from_dict(entry) for entry in data.get("items", []))
        return cls(
            name=str(data.get("name", "scene")),
            seed=int(data.get("seed", 0)),
            domain_size=domain,
            grid_dims=int(data.get("grid_dims", 64)),
            dt=float(data.get("dt", 2.0e-4)),
            gravity=tuple(float(g) for g in gravity),
            settle_time=float(data.get("settle_time", 0.25)),
            plate=plate,
            fork=_merged(_FORK_DEFAULTS, data.get("fork", {}), "fork"),
            camera=_merged(_CAMERA_DEFAULTS, data.get("camera", {}), "camera"),
            recon=_merged(_RECON_DEFAULTS, data.get("recon", {}), "recon"),
            render_mode=str(data.get("render_mode", "on-demand")),
            items=items,
            estimator=EstimatorConfig.from_dict(data.get("estimator", {})),
            planner=PlannerConfig.from_dict(data.get("planner", {})),
            actions=ActionParams.from_dict(data.get("actions", {})),
        )

    @classmethod
    def from_yaml(cls, path) -> "SceneConfig":
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path} does not contain a YAML mapping")
        try:
            return cls.from_dict(data)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        def dataclass_dict(obj):
            return {f.name: getattr(obj, f.name) for f in fields(obj)}

        return {
            "name": self.name,
            "seed": self.seed,
            "domain_size": self.domain_size,
            "grid_dims": self.grid_dims,
            "dt": self.dt,
            "gravity": list(self.gravity),
            "settle_time": self.settle_time,
            "plate": None if self.plate is None else dict(self.plate),
            "fork": dict(self.fork),
            "camera": dict(self.camera),
            "recon": dict(self.recon),
            "render_mode": self.render_mode,
            "items": [item.to_dict() for item in self.items],
            "estimator": dataclass_dict(self.estimator),
            "planner": dataclass_dict(self.planner),
            "actions": dataclass_dict(self.actions),
        }

    def with_overrides(self, **changes) -> "SceneConfig":
        """Copy with top-level scalar fields replaced (CLI flag plumbing)."""
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return SceneConfig(**data)

    def scene_hash(self) -> str:
        """Stable identity of the full effective configuration."""
        dump = yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)
        return hashlib.sha256(dump.encode()).hexdigest()


def _rotated_lattice(width: int, height: int, pitch: float, rotate_deg: float):
    """Centered pixel coordinates, rotated so the primitive turns by +angle."""
    cu = (width - 1) / 2.0
    cv = (height - 1) / 2.0
    jj, ii = np.meshgrid(np.arange(width), np.arange(height))
    u = (jj - cu) * pitch
    v = (ii - cv) * pitch
    theta = math.radians(rotate_deg)
    c, s = math.cos(theta), math.sin(theta)
    return c * u + s * v, -s * u + c * v


def synthetic_depth(
    source: dict, width: int, height: int, pitch: float, rotate_deg: float = 0.0
) -> DepthMap:
    """Evaluate an analytic primitive as a centered heightfield.

    Shapes: ``box`` (flat slab, size [sx, sy, sz] with sy the height),
    ``cylinder`` (vertical axis), ``disc_on_edge`` (a disc of the given
    radius resting on its rim, thickness along the lattice v axis — the
    height profile is R + sqrt(R² − u²)), ``cone_pile`` (linear slope to
    the apex) and ``hemisphere``.
    """
    kind = source["kind"]
    u, v = _rotated_lattice(width, height, pitch, rotate_deg)
    try:
        if kind == "box":
            sx, sy, sz = (float(s) for s in source["size"])
            if min(sx, sy, sz) <= 0:
                raise ConfigError("box size entries must be positive")
            values = np.where((np.abs(u) <= sx / 2) & (np.abs(v) <= sz / 2), sy, 0.0)
        elif kind == "cylinder":
            radius = float(source["radius"])
            h = float(source["height"])
            values = np.where(u**2 + v**2 <= radius**2, h, 0.0)
        elif kind == "disc_on_edge":
            radius = float(source["radius"])
            t = float(source["thickness"])
            rim = np.sqrt(np.maximum(radius**2 - u**2, 0.0))
            values = np.where((np.abs(u) <= radius) & (np.abs(v) <= t / 2), radius + rim, 0.0)
        elif kind == "cone_pile":
            radius = float(source["radius"])
            h = float(source["height"])
            r = np.sqrt(u**2 + v**2)
            values = h * np.maximum(1.0 - r / radius, 0.0)
        elif kind == "hemisphere":
            radius = float(source["radius"])
            values = np.sqrt(np.maximum(radius**2 - u**2 - v**2, 0.0))
        else:
            raise ConfigError(f"source kind {kind!r} is not synthetic")
    except KeyError as exc:
        raise ConfigError(f"source kind {kind!r} is missing field {exc}") from None

    if not (values > 0).any():
        raise ConfigError(f"{kind} source produced an empty footprint")
    border = np.concatenate([values[0, :], values[-1, :], values[:, 0], values[:, -1]])
    if (border > 0).any():
        raise ConfigError(
            f"{kind} footprint is clipped by the {height}x{width} recon lattice; "
            "enlarge recon.width/height or shrink the primitive"
        )
    return DepthMap(values=values, pixel_pitch=pitch)


def _item_depth(spec: ItemSpec, recon: dict, config_dir: Optional[Path]) -> DepthMap:
    kind = spec.source["kind"]
    if kind == "heightmap":
        path = Path(spec.source["path"])
        if not path.is_absolute() and config_dir is not None:
            path = config_dir / path
        pitch = float(spec.source.get("pitch", recon["pitch"]))
        depth = read_pfm(path, pixel_pitch=pitch)
        mask_path = spec.source.get("mask")
        if mask_path is not None:
            mask_path = Path(mask_path)
            if not mask_path.is_absolute() and config_dir is not None:
                mask_path = config_dir / mask_path
            label = int(spec.source.get("label", spec.item_id))
            depth = mask_depth(depth, read_pgm(mask_path), label)
        return depth
    return synthetic_depth(
        spec.source, int(recon["width"]), int(recon["height"]), float(recon["pitch"]),
        rotate_deg=spec.rotate_deg,
    )


def _build_item(
    spec: ItemSpec, recon: dict, config_dir: Optional[Path], scene_seed: int
) -> tuple[FoodMesh, float, ParticleSet]:
    depth = _item_depth(spec, recon, config_dir)
    half_u = (depth.width - 1) / 2.0 * depth.pixel_pitch
    half_v = (depth.height - 1) / 2.0 * depth.pixel_pitch
    template = template_for(depth, origin_xz=(-half_u, -half_v))
    mesh = deform_template(template, depth, item_id=spec.item_id, category=spec.category)
    closed, volume = close_and_volume(mesh, depth)
    material = material_for(spec.category, spec.material)
    seed = spec.seed if spec.seed is not None else scene_seed + spec.item_id
    particles = sample_particles(closed, material, seed=seed)
    return closed, volume, particles


@dataclass
class SceneBundle:
    """A built scene: the world plus everything needed to observe it."""

    config: SceneConfig
    world: SimWorld
    camera: CameraSpec
    plate: Optional[PlateInfo]
    fork_index: Optional[int]
    materials: dict[int, MaterialParams]
    meshes: dict[int, FoodMesh]
    volumes: dict[int, float]

    def settle(self) -> None:
        """Run the configured free-fall period on the live world."""
        if self.config.settle_time > 0:
            self.world.run(self.config.settle_time)

    def render(self, world: Optional[SimWorld] = None):
        return render_frame(self.world if world is None else world, self.camera)

    def observe(self, world: Optional[SimWorld] = None) -> dict[int, ItemObservation]:
        """Per-item features from a fresh render; unseen items are dropped."""
        if self.plate is None:
            raise ConfigError("scene has no plate; observation features need one")
        depth, mask = self.render(world)
        return observe_items(
            depth,
            mask,
            self.materials,
            plate_center_xz=self.plate.center_xz,
            plate_inner_radius=self.plate.inner_radius,
            origin_xz=self.camera.origin_xz,
            rim_tube_radius=self.plate.rim_tube_radius,
            plate_radius=self.plate.radius,
            config=self.config.estimator,
            require_all=False,
        )

    def estimates(self, world: Optional[SimWorld] = None) -> dict[int, SuccessEstimate]:
        return {
            item_id: estimate_for(obs, self.config.estimator)
            for item_id, obs in self.observe(world).items()
        }

    def observer(self) -> Callable[[SimWorld], dict[int, SuccessEstimate]]:
        return self.estimates

    def rollout_fn(self) -> Callable[[SimWorld, "ActionSpec"], RolloutRun]:
        return make_rollout_fn(
            self.camera, self.config.planner, RenderMode(self.config.render_mode)
        )


def build_scene(config: SceneConfig, config_dir=None) -> SceneBundle:
    """Assemble the world: tools first, then every item through recon.

    ``config_dir`` resolves relative heightmap paths (normally the
    directory holding the YAML file).
    """
    if config_dir is not None:
        config_dir = Path(config_dir)
    world = SimWorld(
        domain_size=config.domain_size,
        grid_dims=config.grid_dims,
        dt=config.dt,
        gravity=config.gravity,
    )

    plate_center = None
    plate_top = None
    inner_radius = None
    if config.plate is not None:
        plate_center = tuple(config.plate["center"])
        plate_top = float(config.plate["top_y"])
        tool = plate_sdf(
            radius=float(config.plate["radius"]),
            rim_height=float(config.plate["rim_height"]),
            base_thickness=float(config.plate["base_thickness"]),
        )
        inner_radius = tool.dims["inner_radius"]
        pose = Pose.identity((plate_center[0], plate_top, plate_center[1]))
        world.add_tool(tool, static_trajectory(pose))

    fork_cfg = dict(config.fork)
    park = fork_cfg.pop("park")
    fork = fork_sdf(
        tines=int(fork_cfg["tines"]),
        tine_length=float(fork_cfg["tine_length"]),
        tine_radius=float(fork_cfg["tine_radius"]),
        tine_spacing=float(fork_cfg["tine_spacing"]),
        neck_thickness=float(fork_cfg["neck_thickness"]),
        handle_length=float(fork_cfg["handle_length"]),
    )
    if park is None:
        if config.plate is not None:
            park = (
                plate_center[0] - config.plate["radius"] - 0.06,
                plate_top + 0.10,
                plate_center[1],
            )
        else:
            raise ConfigError("plate-free scenes must give the fork an explicit park pose")
    fork_index = len(world.tools)
    world.add_tool(fork, static_trajectory(Pose.identity(tuple(park))))

    materials: dict[int, MaterialParams] = {}
    meshes: dict[int, FoodMesh] = {}
    volumes: dict[int, float] = {}
    for spec in config.items:
        mesh, volume, particles = _build_item(spec, config.recon, config_dir, config.seed)
        if config.plate is not None:
            # keep every footprint on the flat part of the plate
            d = mesh.heights
            u, v = _rotated_lattice(mesh.cols, mesh.rows, mesh.pixel_pitch, 0.0)
            occupied = d > 0
            radial = np.hypot(u[occupied] + spec.center[0], v[occupied] + spec.center[1])
            if radial.max() > inner_radius:
                raise ConfigError(
                    f"item {spec.item_id} footprint reaches radius {radial.max():.3f} m, "
                    f"outside the plate interior ({inner_radius:.3f} m)"
                )
            base = plate_top + spec.lift if spec.base_y is None else spec.base_y
            origin = (plate_center[0] + spec.center[0], base, plate_center[1] + spec.center[1])
        else:
            if spec.base_y is None:
                raise ConfigError(
                    f"item {spec.item_id}: plate-free scenes need an explicit base_y"
                )
            origin = (
                config.domain_size / 2 + spec.center[0],
                spec.base_y,
                config.domain_size / 2 + spec.center[1],
            )
        world.add_particle_set(particles, offset=origin)
        materials[spec.item_id] = particles.material
        meshes[spec.item_id] = mesh
        volumes[spec.item_id] = volume

    cam = config.camera
    width = int(cam["width"])
    height = int(cam["height"])
    span = float(cam["span"])
    if plate_center is not None:
        center = plate_center
        plane_y = plate_top if cam["plane_y"] is None else float(cam["plane_y"])
    else:
        center = (config.domain_size / 2, config.domain_size / 2)
        if cam["plane_y"] is None:
            raise ConfigError("plate-free scenes must set camera.plane_y")
        plane_y = float(cam["plane_y"])
    camera = CameraSpec.over_plate(
        center_xz=center,
        plane_y=plane_y,
        span=span,
        width=width,
        height=height,
        far=float(cam["far"]),
    )

    plate_info = PlateInfo.from_world(world) if config.plate is not None else None
    return SceneBundle(
        config=config,
        world=world,
        camera=camera,
        plate=plate_info,
        fork_index=fork_index,
        materials=materials,
        meshes=meshes,
        volumes=volumes,
    )


def canonical_scene_names() -> list[str]:
    """Scene files shipped with the package."""
    base = resources.files("platesim") / "scenes"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".yaml"))


def canonical_scene(name: str) -> SceneConfig:
    """Load a shipped scene by bare name (e.g. ``rice_scatter``)."""
    base = resources.files("platesim") / "scenes"
    path = base / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(
            f"unknown canonical scene {name!r}; shipped: {canonical_scene_names()}"
        )
    with resources.as_file(path) as real:
        return SceneConfig.from_yaml(real)
