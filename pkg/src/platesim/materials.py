"""Constitutive models for the three food classes and their parameters.

Elastic foods use the fixed-corotated model, fluid-like (plastic) foods
carry bulk response only, and elastoplastic foods add a von Mises return
map on the Hencky strain. These are the clean reference implementations
(numpy / LAPACK); the simulation kernels carry equivalent fused versions
that the test suite pins against these.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import MaterialError

__all__ = [
    "ModelClass",
    "MaterialParams",
    "lame_from_young_poisson",
    "bulk_modulus",
    "corotated_energy",
    "stress_elastic",
    "stress_plastic",
    "return_map_vonmises",
    "MATERIAL_REGISTRY",
    "material_for",
]


class ModelClass(enum.IntEnum):
    """Constitutive class; the integer values index kernel dispatch tables."""

    ELASTIC = 0
    PLASTIC = 1
    ELASTOPLASTIC = 2


@dataclass(frozen=True)
class MaterialParams:
    """Per-category constitutive and sampling parameters.

    Lame constants are always derived from (E, nu) at construction; the
    consistency invariant is enforced rather than trusted.
    """

    category: str
    model_class: ModelClass
    young_modulus: float
    poisson_ratio: float
    lame_lambda: float
    lame_mu: float
    mass_density: float
    yield_stress: float | None = None
    sampling_density: float = 1.7e7
    friction_mu_plate: float = 0.7
    friction_mu_fork: float = 0.3
    noodle: bool = False

    def __post_init__(self):
        if not (self.young_modulus > 0):
            raise MaterialError("Young's modulus must be positive")
        if not (0 <= self.poisson_ratio < 0.5):
            raise MaterialError("Poisson ratio must lie in [0, 0.5)")
        lam, mu = lame_from_young_poisson(self.young_modulus, self.poisson_ratio)
        scale = max(abs(lam), abs(mu), 1.0)
        if abs(lam - self.lame_lambda) > 1e-9 * scale or abs(mu - self.lame_mu) > 1e-9 * scale:
            raise MaterialError(
                "Lame constants inconsistent with Young modulus / Poisson ratio"
            )
        if self.model_class is ModelClass.ELASTOPLASTIC:
            if self.yield_stress is None or not (self.yield_stress > 0):
                raise MaterialError("elastoplastic materials need yield_stress > 0")
        if not (self.mass_density > 0):
            raise MaterialError("mass density must be positive")

    @classmethod
    def create(
        cls,
        category: str,
        model_class: ModelClass,
        young_modulus: float,
        poisson_ratio: float = 0.35,
        **kwargs,
    ) -> "MaterialParams":
        lam, mu = lame_from_young_poisson(young_modulus, poisson_ratio)
        return cls(
            category=category,
            model_class=model_class,
            young_modulus=young_modulus,
            poisson_ratio=poisson_ratio,
            lame_lambda=lam,
            lame_mu=mu,
            **kwargs,
        )

    @property
    def kappa(self) -> float:
        """Bulk modulus used by the fluid-like class."""
        return bulk_modulus(self.lame_lambda, self.lame_mu)

    def override(self, **changes) -> "MaterialParams":
        """Return a copy with fields replaced; E/nu changes rederive Lame."""
        e = changes.pop("young_modulus", self.young_modulus)
        nu = changes.pop("poisson_ratio", self.poisson_ratio)
        lam, mu = lame_from_young_poisson(e, nu)
        return replace(
            self,
            young_modulus=e,
            poisson_ratio=nu,
            lame_lambda=lam,
            lame_mu=mu,
            **changes,
        )


def lame_from_young_poisson(young: float, poisson: float) -> tuple[float, float]:
    """Standard conversion: lambda = E nu / ((1+nu)(1-2nu)), mu = E / (2(1+nu))."""
    if not (young > 0):
        raise MaterialError("Young's modulus must be positive")
    if not (0 <= poisson < 0.5):
        raise MaterialError(
            f"Poisson ratio {poisson} rejected: 0.5 means incompressible"
        )
    lam = young * poisson / ((1 + poisson) * (1 - 2 * poisson))
    mu = young / (2 * (1 + poisson))
    return lam, mu


def bulk_modulus(lam: float, mu: float) -> float:
    return lam + 2.0 * mu / 3.0


def _polar_rotation(f: np.ndarray) -> np.ndarray:
    """Rotation factor of F = R S via SVD, with reflection fix-up."""
    u, _, vt = np.linalg.svd(f)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def corotated_energy(f: np.ndarray, params: MaterialParams) -> float:
    """Fixed-corotated energy density: mu sum (sigma_i - 1)^2 + lambda/2 (J-1)^2."""
    s = np.linalg.svd(f, compute_uv=False)
    j = float(np.linalg.det(f))
    return float(
        params.lame_mu * np.sum((s - 1.0) ** 2)
        + 0.5 * params.lame_lambda * (j - 1.0) ** 2
    )


def stress_elastic(f: np.ndarray, params: MaterialParams) -> np.ndarray:
    """First Piola-Kirchhoff stress of the fixed-corotated model.

    P(F) = 2 mu (F - R) + lambda (J - 1) J F^-T, zero at any rotation.
    """
    f = np.asarray(f, dtype=np.float64)
    j = float(np.linalg.det(f))
    if not (j > 0):
        raise MaterialError(f"non-invertible deformation gradient, det = {j:g}")
    r = _polar_rotation(f)
    f_inv_t = np.linalg.inv(f).T
    return 2.0 * params.lame_mu * (f - r) + params.lame_lambda * (j - 1.0) * j * f_inv_t


def stress_plastic(j: float, params: MaterialParams) -> np.ndarray:
    """Cauchy stress of the fluid-like class: kappa (J - 1) I, no deviator."""
    if not (j > 0):
        raise MaterialError(f"volume ratio must be positive, got {j:g}")
    return params.kappa * (j - 1.0) * np.eye(3)


def return_map_vonmises(f_trial: np.ndarray, params: MaterialParams) -> np.ndarray:
    """Project a trial deformation gradient onto the von Mises yield surface.

    With F = U diag(sigma) V^T and Hencky strain eps = log sigma, the
    deviatoric part eps_hat is rescaled so that ||2 mu eps_hat|| = sigma_Y
    whenever the trial state lies outside the surface; the volumetric part
    (and hence det F) is untouched.
    """
    f = np.asarray(f_trial, dtype=np.float64)
    u, s, vt = np.linalg.svd(f)
    if s.min() <= 0:
        raise MaterialError("degenerate SVD: zero singular value")
    if np.linalg.det(u) < 0:
        u[:, -1] *= -1
        s = s.copy()
        s[-1] *= -1
    if np.linalg.det(vt) < 0:
        vt[-1, :] *= -1
        s = s.copy()
        s[-1] *= -1
    if s.min() <= 0:
        raise MaterialError("inverted deformation gradient in return map")
    eps = np.log(s)
    trace = eps.sum()
    eps_hat = eps - trace / 3.0
    norm = 2.0 * params.lame_mu * float(np.linalg.norm(eps_hat))
    sigma_y = params.yield_stress
    if sigma_y is None:
        raise MaterialError("return map needs yield_stress")
    if norm <= sigma_y:
        return f
    eps_proj = eps_hat * (sigma_y / norm) + trace / 3.0
    return u @ np.diag(np.exp(eps_proj)) @ vt


def _registry() -> dict[str, MaterialParams]:
    """Per-category defaults spanning the soft-food property axes.

    Stiffnesses and densities are placeholders (config-overridable); tests
    assert orderings and gates, never these constants.
    """
    mk = MaterialParams.create
    e, p, ep = ModelClass.ELASTIC, ModelClass.PLASTIC, ModelClass.ELASTOPLASTIC
    entries = [
        mk("jello", e, 5e3, mass_density=1050.0),
        mk("tofu", e, 1e4, mass_density=1030.0),
        mk("banana", e, 3e4, mass_density=950.0),
        mk("avocado", e, 2e4, mass_density=960.0),
        mk("red_velvet_cake", ep, 8e3, yield_stress=200.0, mass_density=400.0),
        mk("mashed_potato", ep, 1e4, yield_stress=150.0, mass_density=1000.0),
        mk("oatmeal", ep, 5e3, yield_stress=80.0, mass_density=800.0),
        mk("spaghetti", ep, 1e4, yield_stress=300.0, mass_density=700.0, noodle=True),
        mk("rice", p, 2e4, mass_density=850.0, friction_mu_plate=0.8),
        mk("mac_and_cheese", p, 2e4, mass_density=600.0),
    ]
    return {m.category: m for m in entries}


MATERIAL_REGISTRY: dict[str, MaterialParams] = _registry()


def material_for(category: str, overrides: dict | None = None) -> MaterialParams:
    """Look up a category, applying config overrides if given."""
    try:
        base = MATERIAL_REGISTRY[category]
    except KeyError:
        raise MaterialError(
            f"unknown food category {category!r}; known: "
            f"{sorted(MATERIAL_REGISTRY)}"
        ) from None
    if overrides:
        known = {
            "young_modulus", "poisson_ratio", "yield_stress", "mass_density",
            "sampling_density", "friction_mu_plate", "friction_mu_fork",
            "noodle", "model_class",
        }
        bad = set(overrides) - known
        if bad:
            raise MaterialError(f"unknown material override fields: {sorted(bad)}")
        coerced = {}
        for key, value in overrides.items():
            if key == "noodle":
                coerced[key] = bool(value)
                continue
            if key == "model_class":
                try:
                    coerced[key] = ModelClass[str(value).upper()]
                except KeyError:
                    names = [m.name.lower() for m in ModelClass]
                    raise MaterialError(
                        f"unknown model_class {value!r}; known: {names}"
                    ) from None
                continue
            try:
                # YAML 1.1 reads exponent forms like 5.0e8 as strings
                coerced[key] = float(value)
            except (TypeError, ValueError):
                raise MaterialError(
                    f"material override {key} must be numeric, got {value!r}"
                ) from None
        base = base.override(**coerced)
    return base

