"""Physical parameters, derived scales and regime-time estimates.

All desk-scale work uses hbar = mass = 1. The collapse coupling ``lambda_``
has dimensions 1/(length^2 time); the natural frequency is
``omega = 2 sqrt(hbar lambda / m)`` and the natural length ``1/|z|`` with
``z^2 = (1 - i) sqrt(lambda m / hbar)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidParameterError

# GRW-matched universal coupling and nucleon mass (SI).
LAMBDA0_SI = 1.00e-2  # m^-2 s^-1
NUCLEON_MASS_SI = 1.67e-27  # kg
HBAR_SI = 1.054571817e-34  # J s
DEFAULT_DAVIES_C = 1.0


@dataclass(frozen=True)
class PhysParams:
    hbar: float = 1.0
    mass: float = 1.0
    lambda_: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "lambda_"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be a positive finite number, got {v!r}")

    @classmethod
    def si_grw(cls, mass: float, lambda0: float = LAMBDA0_SI, hbar: float = HBAR_SI,
               nucleon_mass: float = NUCLEON_MASS_SI) -> "PhysParams":
        """SI parameters with the coupling scaled as lambda0 * m / m_nucleon."""
        return cls(hbar=hbar, mass=mass, lambda_=lambda0 * mass / nucleon_mass)


@dataclass(frozen=True)
class DerivedConstants:
    omega: float
    upsilon: complex
    z2: complex
    alpha_inf: complex
    lambda_: float
    hbar: float
    mass: float

    @property
    def z(self) -> complex:
        """Principal square root of z^2 (argument -pi/8)."""
        return complex(self.z2) ** 0.5

    def t_bar(self, c: float = DEFAULT_DAVIES_C) -> float:
        """Validity threshold (4c + 1)/omega of the spectral representation."""
        return (4.0 * c + 1.0) / self.omega

    @property
    def sigma_inf(self) -> complex:
        """Fixed point lambda/upsilon = z^2/2 of the Gaussian width equation."""
        return self.lambda_ / self.upsilon

    @property
    def asymptotic_spread_q(self) -> float:
        return math.sqrt(self.hbar / (self.mass * self.omega))

    @property
    def asymptotic_spread_p(self) -> float:
        return math.sqrt(self.hbar * self.mass * self.omega / 2.0)


@dataclass(frozen=True)
class RegimeTimes:
    t1: float
    t2: float
    ell: float
    big_l: float
    extra: dict = field(default_factory=dict, compare=False)


def derive_constants(p: PhysParams) -> DerivedConstants:
    if not isinstance(p, PhysParams):
        raise InvalidParameterError("expected PhysParams")
    omega = 2.0 * math.sqrt(p.hbar * p.lambda_ / p.mass)
    upsilon = complex(omega / 2.0, omega / 2.0)
    z2 = complex(1.0, -1.0) * math.sqrt(p.lambda_ * p.mass / p.hbar)
    alpha_inf = 2.0 * p.lambda_ / upsilon
    return DerivedConstants(omega, upsilon, z2, alpha_inf, p.lambda_, p.hbar, p.mass)


def regime_times(p: PhysParams, ell: float, big_l: float) -> RegimeTimes:
    """Collapse time t1 = 3/(2 ell^2 lambda) and classical-regime end t2.

    ``t2 = ((3/2) (L/sqrt(lambda)) (m/hbar))^(2/3)`` is the time after which the
    integrated-Brownian fluctuation of the mean position exceeds ``big_l``.
    """
    if not (ell > 0 and big_l > 0):
        raise InvalidParameterError("ell and big_l must be positive")
    t1 = 3.0 / (2.0 * ell**2 * p.lambda_)
    t2 = (1.5 * big_l / math.sqrt(p.lambda_) * p.mass / p.hbar) ** (2.0 / 3.0)
    return RegimeTimes(t1=t1, t2=t2, ell=ell, big_l=big_l)


def alpha_real_limits(p: PhysParams) -> tuple[float, float]:
    """Small-time slope (2/3) lambda and large-time value 2 lambda/omega of Re(alpha_t)."""
    d = derive_constants(p)
    return 2.0 * p.lambda_ / 3.0, 2.0 * p.lambda_ / d.omega


def alpha_tilde_real_limits(p: PhysParams) -> tuple[float, float]:
    """Small-time slope 2 lambda and large-time value 2 lambda/omega of Re(alpha~_t)."""
    d = derive_constants(p)
    return 2.0 * p.lambda_, 2.0 * p.lambda_ / d.omega
