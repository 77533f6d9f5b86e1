"""Spectral toolkit for the non-self-adjoint oscillator p^2/2m - i hbar lambda q^2.

Eigenstates ``phi_n(x) = sqrt(z) exp(-z^2 x^2/2) Hn(z x)`` use normalised
Hermite polynomials of complex argument.  They are bi-orthonormal under the
bilinear pairing ``int phi_n phi_m dx = delta_nm`` (no complex conjugate),
while their usual norms grow exponentially with ``n``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln

from .errors import (AlignmentError, CoverageError, EstimationError, InvalidParameterError,
                     TruncationError, ValidityError)
from .gaussian import AsymptoticState
from .params import DerivedConstants
from .state import GridSpec, GridState

DEFAULT_N_MAX = 64
_RESCALE_ABOVE = 150


@dataclass(frozen=True)
class HermiteBasisSpec:
    n_max: int
    z2: complex

    def __post_init__(self):
        if self.n_max < 0:
            raise InvalidParameterError("n_max must be >= 0")

    @property
    def z(self) -> complex:
        return complex(self.z2) ** 0.5


@dataclass(frozen=True)
class SpectralExpansion:
    alphas: np.ndarray
    n_max: int
    t_bar: float
    c: float = 0.0


@dataclass(frozen=True)
class RecombinedCoefficients:
    alpha_bars: np.ndarray
    zeta_bar: complex
    N_t_bound: float
    c: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class ProjectorNorms:
    norms: np.ndarray
    c: float
    intercept: float

    @property
    def log_ratio(self) -> np.ndarray:
        """ln ||P_n|| / n for n >= 1."""
        n = np.arange(1, len(self.norms))
        return np.log(self.norms[1:]) / n


# ------------------------------------------------------------ Hermite

def hermite_complex(n: int, z, normalized: bool = False, log_scaled: bool = False):
    """Physicists' Hermite polynomial H_n at complex argument(s) ``z``.

    The normalised variant divides by ``N_n = sqrt(sqrt(pi) 2^n n!)``.  With
    ``log_scaled`` the result is returned as ``(mantissa, log_factor)`` with
    ``H = mantissa * exp(log_factor)``; the recurrence is rescaled whenever the
    magnitude exceeds 1e100 (needed for n above about 150).
    """
    if n < 0:
        raise InvalidParameterError("order must be >= 0")
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    log_f = np.zeros(z.shape)
    if normalized:
        h_prev = np.zeros_like(z)
        h = np.full_like(z, math.pi ** -0.25)
        for k in range(n):
            h_prev, h = h, math.sqrt(2.0 / (k + 1)) * z * h - math.sqrt(k / (k + 1)) * h_prev
            if log_scaled or n > _RESCALE_ABOVE:
                h, h_prev, log_f = _rescale(h, h_prev, log_f)
    else:
        h_prev = np.zeros_like(z)
        h = np.ones_like(z)
        for k in range(n):
            h_prev, h = h, 2.0 * z * h - 2.0 * k * h_prev
            if log_scaled or n > _RESCALE_ABOVE:
                h, h_prev, log_f = _rescale(h, h_prev, log_f)
    if log_scaled:
        return (h[0], float(log_f[0])) if scalar else (h, log_f)
    out = h * np.exp(log_f)
    return complex(out[0]) if scalar else out


def _rescale(h, h_prev, log_f):
    big = np.abs(h) > 1e100
    if np.any(big):
        s = np.where(big, np.abs(h), 1.0)
        h = h / s
        h_prev = h_prev / s
        log_f = log_f + np.log(s)
    return h, h_prev, log_f


def hermite_addition_rhs(n: int, z1, z2):
    """sum_k C(n, k) (2 z2)^(n-k) H_k(z1), which equals H_n(z1 + z2)."""
    total = 0j
    for k in range(n + 1):
        total += math.comb(n, k) * (2.0 * z2) ** (n - k) * hermite_complex(k, z1)
    return total


# ------------------------------------------------------------ eigenstates

def eigenstate_matrix(n_max: int, x, z2: complex, dtype=np.complex128) -> np.ndarray:
    """Rows phi_0 .. phi_{n_max} evaluated at ``x``.

    ``dtype=np.clongdouble`` evaluates everything in extended precision,
    which the bilinear pairing needs for 1e-8 accuracy beyond n ~ 20.
    """
    real = np.longdouble if dtype == np.clongdouble else np.float64
    x = np.asarray(x, dtype=real)
    zz2 = np.asarray(complex(z2), dtype=dtype)
    z = np.sqrt(zz2)
    u = z * x
    out = np.empty((n_max + 1, len(x)), dtype=dtype)
    g = np.sqrt(z) * np.exp(-zz2 * x * x / real(2))
    out[0] = g * real(np.pi) ** real(-0.25)
    if n_max >= 1:
        out[1] = np.sqrt(real(2)) * u * out[0]
    for k in range(1, n_max):
        out[k + 1] = np.sqrt(real(2) / real(k + 1)) * u * out[k] - np.sqrt(real(k) / real(k + 1)) * out[k - 1]
    return out


def _tail_check(grid: GridSpec, d: DerivedConstants, n: int, tol: float = 1e-10):
    # the envelope of phi_n has modulus exp(-Re z^2 x^2/2) times a degree-n polynomial
    reach = max(abs(grid.x0), abs(grid.x_end))
    zr = abs(d.z)
    u = reach * zr
    log_env = -0.5 * d.z2.real * reach**2 + n * math.log(max(u, 1.0) * math.sqrt(2.0)) - 0.5 * gammaln(n + 1)
    if log_env > math.log(tol):
        raise CoverageError(f"grid half-width {reach:g} too small for eigenstate {n}")


def eigenstate(n: int, grid: GridSpec, d: DerivedConstants, dtype=np.complex128) -> GridState:
    if n < 0:
        raise InvalidParameterError("order must be >= 0")
    _tail_check(grid, d, n)
    v = eigenstate_matrix(n, grid.x, d.z2, dtype)[n]
    return GridState(grid, v, 0j, 0.0, {"order": n})


def eigenvalue(n: int, d: DerivedConstants) -> complex:
    """(1 - i) hbar omega (n + 1/2) / 2."""
    return (1 - 1j) * d.hbar * d.omega * (n + 0.5) / 2.0


def eigenvalue_residual(n: int, grid: GridSpec, d: DerivedConstants) -> float:
    """Relative residual of H phi_n = lambda_n phi_n with 4th-order differences."""
    v = eigenstate(n, grid, d).values
    dx = grid.dx
    lap = np.zeros_like(v)
    lap[2:-2] = (-v[4:] + 16 * v[3:-1] - 30 * v[2:-2] + 16 * v[1:-3] - v[:-4]) / (12 * dx * dx)
    x = grid.x
    hv = -(d.hbar**2) / (2 * d.mass) * lap - 1j * d.hbar * d.lambda_ * x * x * v
    r = hv - eigenvalue(n, d) * v
    sl = slice(2, -2)
    return float(np.linalg.norm(r[sl]) / np.linalg.norm(eigenvalue(n, d) * v[sl]))


def _trapz_bilinear(rows: np.ndarray, f: np.ndarray, dx: float) -> np.ndarray:
    w = np.ones(rows.shape[-1], dtype=rows.real.dtype)
    w[0] = w[-1] = 0.5
    return (rows * (w * f)).sum(axis=-1) * dx


def biorthonormality_matrix(n_max: int, grid: GridSpec, d: DerivedConstants, dtype=np.clongdouble) -> np.ndarray:
    """Matrix of int phi_n phi_m dx by trapezoid quadrature."""
    _tail_check(grid, d, n_max)
    real = np.longdouble if dtype == np.clongdouble else np.float64
    x = real(grid.x0) + real(grid.dx) * np.arange(grid.n, dtype=real)
    p = eigenstate_matrix(n_max, x, d.z2, dtype)
    w = np.ones(grid.n, dtype=real)
    w[0] = w[-1] = real(0.5)
    return (p * w) @ p.T * real(grid.dx)


def project(phi: GridState, n: int, d: DerivedConstants, dtype=np.complex128) -> complex:
    """alpha_n = int phi_n(x) phi(x) dx (bilinear pairing, global factor included)."""
    return complex(project_all(phi, int(n), d, dtype)[int(n)] * np.exp(phi.log_scale))


def project_all(phi: GridState, n_max: int, d: DerivedConstants, dtype=np.complex128) -> np.ndarray:
    """alpha_0 .. alpha_{n_max} relative to phi.values (log_scale not applied)."""
    if phi.n < 3:
        raise AlignmentError("grid too small")
    rows = eigenstate_matrix(n_max, phi.x, d.z2, dtype)
    return np.asarray(_trapz_bilinear(rows, phi.values.astype(dtype), phi.dx), dtype=complex)


def expansion(phi: GridState, d: DerivedConstants, n_max: int = DEFAULT_N_MAX, c: float | None = None) -> SpectralExpansion:
    if c is None:
        c = projector_norms(max(n_max, 40), d).c
    a = project_all(phi, n_max, d) * np.exp(phi.log_scale)
    return SpectralExpansion(a, n_max, t_bar(c, d), c)


def reconstruct(alphas, grid: GridSpec, d: DerivedConstants) -> GridState:
    a = np.asarray(alphas, dtype=complex)
    rows = eigenstate_matrix(len(a) - 1, grid.x, d.z2)
    return GridState(grid, a @ rows)


# ------------------------------------------------------------ projector norms

def projector_norm_values(n_max: int, points_per_unit: int = 100) -> np.ndarray:
    """||phi_n||^2 for n = 0..n_max.

    The conjugated norm does not depend on |z|: substituting s = |z| x maps
    every coupling onto z^2 = (1 - i)/sqrt(2) * |z|^2 scaled to |z| = 1.
    """
    z2 = complex(np.exp(-0.25j * math.pi))  # |z| = 1, arg z^2 = -pi/4
    reach = 2.0 * math.sqrt(2.0 * n_max + 1.0) + 12.0
    n = int(2 * reach * points_per_unit) + 1
    s = np.linspace(-reach, reach, n)
    rows = eigenstate_matrix(n_max, s, z2)
    dens = np.abs(rows) ** 2
    edge = dens[:, [0, -1]].max(axis=1)
    if np.any(edge > 1e-14 * dens.max(axis=1)):
        raise EstimationError("integration window too narrow for the requested orders")
    return trapezoid(dens, s, axis=1)


def projector_norms(n_max: int, d: DerivedConstants | None = None) -> ProjectorNorms:
    """Norms ||P_n|| = ||phi_n||^2 and the Davies constant from their growth.

    ``c`` is half the least-squares slope of ln ||P_n|| against n over the
    upper half of the orders.
    """
    if n_max < 10:
        raise EstimationError("need n_max >= 10 for a meaningful growth fit")
    norms = projector_norm_values(n_max)
    n = np.arange(n_max + 1)
    sel = n >= n_max // 2
    slope, intercept = np.polyfit(n[sel], np.log(norms[sel]), 1)
    if not (np.isfinite(slope) and slope > 0):
        raise EstimationError(f"degenerate projector-norm fit (slope {slope})")
    return ProjectorNorms(norms, 0.5 * float(slope), float(intercept))


def t_bar(c: float, d: DerivedConstants) -> float:
    return (4.0 * c + 1.0) / d.omega


def growth_envelope(alphas, c: float) -> float:
    """Smallest C1 with |alpha_n| <= C1 exp(n c)."""
    a = np.abs(np.asarray(alphas))
    return float(np.max(a * np.exp(-c * np.arange(len(a)))))


# ------------------------------------------------------------ recombination

def _n_t_sum(c: float, w: float, k_limit: int = 500, tol: float = 1e-14):
    """sum_k e^{k(c+1)} w^k / sqrt(k^k) with 0^0 = 1; returns (sum, k_used)."""
    total = 1.0
    for k in range(1, k_limit + 1):
        lt = k * (c + 1.0) + (k * math.log(w) if w > 0 else -math.inf) - 0.5 * k * math.log(k)
        term = math.exp(lt) if lt > -745 else 0.0
        total += term
        if term < tol * total and k > 1:
            return total, k
    raise TruncationError("bound series did not converge within 500 terms")


def recombine(exp: SpectralExpansion, zeta_bar: complex, m_max: int | None = None,
              d: DerivedConstants | None = None, z: complex | None = None) -> RecombinedCoefficients:
    """Shifted coefficients alpha_bar^(m) for the frame centred at xbar.

    alpha_bar^(m) = sum_k alpha_{k+m} sqrt((k+m)!)/(sqrt(m!) k!) (sqrt(2) z zeta_bar)^k
    """
    if z is None:
        if d is None:
            raise InvalidParameterError("need DerivedConstants or z")
        z = d.z
    a = np.asarray(exp.alphas, dtype=complex)
    n_top = len(a) - 1
    m_max = n_top if m_max is None else min(m_max, n_top)
    w = complex(math.sqrt(2.0) * z * zeta_bar)
    c = exp.c
    bound_sum, k_needed = _n_t_sum(c, abs(w))
    out = np.zeros(m_max + 1, dtype=complex)
    if w == 0:
        out[:] = a[: m_max + 1]
    else:
        logw = np.log(w)
        for m in range(m_max + 1):
            k = np.arange(0, n_top - m + 1)
            logc = 0.5 * gammaln(k + m + 1) - 0.5 * gammaln(m + 1) - gammaln(k + 1) + k * logw
            out[m] = np.sum(a[m:] * np.exp(logc))
    # |alpha_n| <= C1 e^{nc}; Stirling constant C2 = e^{1/12}.  A covers the k, m >= 1 terms
    # (C1 C2^2 / pi^{1/4}), the m = 0 terms (C1 sqrt(C2) (2 pi)^{-1/4}) and the k = 0 terms (C1).
    c1 = growth_envelope(a, c)
    c2 = math.exp(1.0 / 12.0)
    big_a = c1 * max(1.0, c2 * c2 / math.pi**0.25, math.sqrt(c2) / (2.0 * math.pi) ** 0.25)
    return RecombinedCoefficients(out, complex(zeta_bar), big_a * bound_sum, c,
                                  {"k_needed": k_needed, "C1": c1})


def expand_solution(rc: RecombinedCoefficients, a: AsymptoticState, t: float, grid: GridSpec,
                    d: DerivedConstants, tol: float = 1e-12) -> GridState:
    """phi_t(x) = e^{i kbar x + gamma - (1+i) w t/4} sum_m abar_m e^{-(1+i) m w t/2} phi_m(x - xbar)."""
    tb = t_bar(rc.c, d)
    if not t > tb:
        raise ValidityError(f"spectral representation needs t > t_bar = {tb:.4g}, got t = {t:.4g}")
    ab = np.asarray(rc.alpha_bars)
    c1 = rc.meta.get("C1", 1.0)
    rate = 2.0 * rc.c + 0.5 - 0.5 * d.omega * t
    m_used = len(ab) - 1
    if rate < 0:
        # tail bound C1 N_t exp(rate m) below tol
        need = math.log(tol / max(c1 * rc.N_t_bound, 1e-300)) / rate
        m_used = int(min(m_used, max(0, math.ceil(need))))
    m = np.arange(m_used + 1)
    damp = ab[: m_used + 1] * np.exp(-(1 + 1j) * m * d.omega * t / 2.0)
    rows = eigenstate_matrix(m_used, grid.x - a.xbar, d.z2)
    series = damp @ rows
    log_pref = complex(a.gamma) - (1 + 1j) * d.omega * t / 4.0
    values = np.exp(1j * a.kbar * grid.x) * series
    return GridState(grid, values, log_pref, t, {"m_used": m_used})


def r_norm(rc: RecombinedCoefficients, a: AsymptoticState, t: float, grid: GridSpec, d: DerivedConstants) -> float:
    """|| sum_m abar_m e^{-(1+i) m w t/2} phi_m(. - xbar) ||."""
    m = np.arange(len(rc.alpha_bars))
    rows = eigenstate_matrix(len(m) - 1, grid.x - a.xbar, d.z2)
    v = (rc.alpha_bars * np.exp(-(1 + 1j) * m * d.omega * t / 2.0)) @ rows
    return float(math.sqrt(np.sum(np.abs(v) ** 2) * grid.dx))


# ------------------------------------------------------------ CSV

def write_coefficients_csv(alphas, norms, filename) -> None:
    with Path(filename).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "alpha_re", "alpha_im", "projector_norm"])
        for n, a in enumerate(np.asarray(alphas, dtype=complex)):
            pn = norms[n] if norms is not None and n < len(norms) else float("nan")
            w.writerow([n, repr(a.real), repr(a.imag), repr(float(pn))])
