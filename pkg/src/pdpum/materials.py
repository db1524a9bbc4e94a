"""Elastic constants and the derived constants of the cohesive PD bond law."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class MaterialError(ValueError):
    """Raised for physically inadmissible material constants."""


def lame_parameters(E: float, nu: float) -> tuple[float, float]:
    """Return ``(mu, lam)`` for Young's modulus ``E`` and Poisson ratio ``nu``.

    Plane strain is used throughout, so no plane-stress conversion happens.
    """
    if E <= 0:
        raise MaterialError(f"Young's modulus must be positive, got {E}")
    if not (-1.0 < nu < 0.5):
        raise MaterialError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return mu, lam


@dataclass(frozen=True)
class Material:
    """Classical constants plus the two-parameter double-well PD constants.

    Attributes:
        rho: mass density [kg/m^3]
        E: Young's modulus [Pa]
        nu: Poisson ratio
        Gc: critical energy release rate [J/m^2]
        C: amplitude of the bond potential [J/m^2]
        beta: decay of the bond potential [1/m]
        r_c: inflection point of the potential, the damage threshold [sqrt(m)]
        mu, lam: Lame parameters [Pa]
    """

    rho: float
    E: float
    nu: float
    Gc: float
    C: float = field(init=False)
    beta: float = field(init=False)
    r_c: float = field(init=False)
    mu: float = field(init=False)
    lam: float = field(init=False)

    def __post_init__(self) -> None:
        for name in ("rho", "E", "nu", "Gc"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise MaterialError(f"{name} must be positive and finite, got {value}")
        if self.nu >= 0.5:
            raise MaterialError(f"nu must be < 0.5, got {self.nu}")
        C = math.pi * self.Gc / 4.0
        beta = 4.0 * self.E * self.nu / (C * (1.0 - self.nu) * (1.0 - 2.0 * self.nu))
        mu, lam = lame_parameters(self.E, self.nu)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "r_c", math.sqrt(0.5 / beta))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)

    @property
    def plane_strain_modulus(self) -> float:
        """Uniaxial-stress modulus E / (1 - nu^2) for a plane-strain strip."""
        return self.E / (1.0 - self.nu**2)

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("rho", "E", "nu", "Gc", "C", "beta", "r_c", "mu", "lam")}


def calibrate(rho: float, E: float, nu: float, Gc: float) -> Material:
    """Build a :class:`Material` and derive ``C``, ``beta`` and ``r_c``."""
    return Material(rho=rho, E=E, nu=nu, Gc=Gc)


# Constants shared by every experiment (PMMA-like).
REFERENCE_MATERIAL = dict(rho=1200.0, E=3.25e9, nu=1.0 / 3.0, Gc=500.0)
