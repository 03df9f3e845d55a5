"""Exception types shared across the package.

The CLI maps these onto exit codes: config problems exit 2, simulation
failures exit 3, verification failures exit 4.
"""


class PlatesimError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PlatesimError):
    """Malformed scene configuration or CLI arguments."""


class DimensionMismatchError(PlatesimError):
    """Paired raster inputs (depth/mask/template) disagree in shape."""


class EmptyItemError(PlatesimError):
    """An item id selects no pixels / no particles."""


class OpenMeshError(PlatesimError):
    """Operation requires a closed (watertight) mesh."""


class SamplingError(PlatesimError):
    """Particle sampling cannot satisfy its contract (e.g. zero count)."""


class MaterialError(PlatesimError):
    """Constitutive parameters out of range."""


class SimulationError(PlatesimError):
    """Base for runtime simulation failures (CLI exit code 3)."""


class BlowupError(SimulationError):
    """A particle left the valid stencil region."""

    def __init__(self, particle_id: int, step: int):
        self.particle_id = int(particle_id)
        self.step = int(step)
        super().__init__(
            f"particle {particle_id} left the valid grid region at step {step}"
        )


class InversionError(SimulationError):
    """det(F) dropped to zero or below for some particle."""

    def __init__(self, particle_id: int, step: int):
        self.particle_id = int(particle_id)
        self.step = int(step)
        super().__init__(
            f"deformation gradient inverted for particle {particle_id} at step {step}"
        )


class CFLError(SimulationError):
    """Timestep too large for the current particle velocities."""


class TrajectoryError(PlatesimError):
    """Empty or non-monotone trajectory keyframes."""


class InfeasibleActionError(PlatesimError):
    """No collision-free approach pose exists for the requested action."""


class ItemTooTallError(InfeasibleActionError):
    """Cut requested on an item taller than the fork tines."""


class TooFewParticlesError(PlatesimError):
    """Geometry statistics need at least 4 particles."""


class VerificationError(PlatesimError):
    """One or more acceptance checks failed (CLI exit code 4)."""
