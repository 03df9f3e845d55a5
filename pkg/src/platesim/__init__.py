"""Plate-scale food manipulation sandbox: depth-map reconstruction,
MLS-MPM simulation with rigid tool SDFs, and rule-based acquisition
planning with simulated pre-acquisition rollouts."""

from .depthio import DepthMap, SegMask, mask_depth, read_pfm, read_pgm, write_pfm, write_pgm
from .errors import (
    BlowupError,
    CFLError,
    ConfigError,
    InfeasibleActionError,
    InversionError,
    MaterialError,
    PlatesimError,
    SimulationError,
)
from .materials import MATERIAL_REGISTRY, MaterialParams, ModelClass, material_for
from .mpm import SimWorld, load_checkpoint, read_checkpoint, save_checkpoint
from .recon import (
    FoodMesh,
    ParticleSet,
    close_and_volume,
    deform_template,
    sample_particles,
    template_for,
)
from .tools import Pose, ToolSDF, ToolTrajectory, fork_sdf, plate_sdf, static_trajectory

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "DepthMap",
    "SegMask",
    "mask_depth",
    "read_pfm",
    "read_pgm",
    "write_pfm",
    "write_pgm",
    "PlatesimError",
    "ConfigError",
    "MaterialError",
    "SimulationError",
    "BlowupError",
    "InversionError",
    "CFLError",
    "InfeasibleActionError",
    "MaterialParams",
    "ModelClass",
    "MATERIAL_REGISTRY",
    "material_for",
    "SimWorld",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint",
    "FoodMesh",
    "ParticleSet",
    "template_for",
    "deform_template",
    "close_and_volume",
    "sample_particles",
    "Pose",
    "ToolSDF",
    "ToolTrajectory",
    "fork_sdf",
    "plate_sdf",
    "static_trajectory",
]
