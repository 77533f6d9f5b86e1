"""Gaussian solutions of the linear equation and the asymptotic frame.

A Gaussian ``phi(x) = exp[-sigma (x - xm)^2 + i km x + varsigma]`` stays
Gaussian.  The width ``sigma`` obeys a noise-free Riccati equation that is
advanced exactly; ``xm``, ``km`` and ``varsigma`` are stepped with
Euler-Maruyama.  The same stepping with ``sigma`` frozen at its fixed point
``z^2/2`` gives the asymptotic frame ``(xbar, kbar, gamma)``, related by
``gamma = varsigma + (1 + i) omega t / 4``.

Under the physical measure the expectation of position of a Gaussian is
``xm`` itself, so the Girsanov drift is known in closed form and the
innovation ``d xi - 2 sqrt(lambda) xm dt`` reduces to ``dW``.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CoverageError, DomainError, InstabilityError, InvalidParameterError, NumericError
from .params import DerivedConstants, PhysParams, derive_constants
from .paths import WienerPath
from .state import GridSpec, GridState


@dataclass(frozen=True)
class GaussianState:
    sigma: complex
    xm: float = 0.0
    km: float = 0.0
    varsigma: complex = 0j
    t: float = 0.0

    def __post_init__(self):
        if not complex(self.sigma).real > 0:
            raise InvalidParameterError("Gaussian width needs Re(sigma) > 0")

    @property
    def spread(self) -> float:
        """Position spread 1/(2 sqrt(Re sigma)) of the normalised Gaussian."""
        return 0.5 / math.sqrt(complex(self.sigma).real)

    def on_grid(self, grid: GridSpec) -> GridState:
        x = grid.x
        v = np.exp(-self.sigma * (x - self.xm) ** 2 + 1j * self.km * x)
        return GridState(grid, v, complex(self.varsigma), self.t)

    @classmethod
    def normalized(cls, sigma: complex, xm: float = 0.0, km: float = 0.0) -> "GaussianState":
        """Unit-norm Gaussian with the given width and centre."""
        sr = complex(sigma).real
        return cls(sigma, xm, km, 0.25 * math.log(2.0 * sr / math.pi) + 0j, 0.0)


@dataclass(frozen=True)
class AsymptoticState:
    xbar: float = 0.0
    kbar: float = 0.0
    gamma: complex = 0j
    t: float = 0.0


@dataclass
class GaussianTrajectory:
    t: np.ndarray
    sigma: np.ndarray
    xm: np.ndarray
    km: np.ndarray
    varsigma: np.ndarray
    dxi: np.ndarray | None = None

    def state(self, k: int = -1) -> GaussianState:
        return GaussianState(complex(self.sigma[k]), float(self.xm[..., k]), float(self.km[..., k]),
                             complex(self.varsigma[..., k]), float(self.t[k]))


@dataclass
class AsymptoticTrajectory:
    t: np.ndarray
    xbar: np.ndarray
    kbar: np.ndarray
    gamma: np.ndarray

    def state(self, k: int = -1) -> AsymptoticState:
        return AsymptoticState(float(self.xbar[..., k]), float(self.kbar[..., k]),
                               complex(self.gamma[..., k]), float(self.t[k]))


# ------------------------------------------------------------------ sigma

def sigma_rhs(sigma, p: PhysParams):
    return p.lambda_ - 2j * p.hbar / p.mass * sigma * sigma


def kappa_from_sigma(sigma0: complex, d: DerivedConstants) -> complex:
    """kappa with (lambda/upsilon) coth(kappa) = sigma0."""
    w = complex(sigma0) * d.upsilon / d.lambda_
    if w == 1:
        raise DomainError("sigma0 is the fixed point; kappa is infinite")
    return cmath.atanh(1.0 / w)


def sigma_closed_form(t, kappa: complex, d: DerivedConstants):
    w = d.upsilon * np.asarray(t, dtype=float) + kappa
    if np.any(np.abs(np.sinh(w)) < 1e-12):
        raise DomainError("coth pole: upsilon t + kappa is too close to i pi n")
    return d.sigma_inf / np.tanh(w)


def sigma_advance(sigma, h: float, d: DerivedConstants):
    """Exact Riccati flow over a time ``h`` (coth addition formula).

    Works for the fixed point and avoids computing kappa.
    """
    s = np.asarray(sigma, dtype=complex) / d.sigma_inf  # coth(kappa)
    if h == 0:
        return np.asarray(sigma, dtype=complex)
    e = np.exp(-2.0 * d.upsilon * h)
    c = (1.0 + e) / (1.0 - e)  # coth(upsilon h)
    return d.sigma_inf * (s * c + 1.0) / (s + c)


def sigma_series(sigma0: complex, t_grid, d: DerivedConstants) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    out = np.empty(len(t), dtype=complex)
    out[0] = sigma0
    for k in range(1, len(t)):
        out[k] = sigma_advance(out[k - 1], t[k] - t[k - 1], d)
    return out


# ------------------------------------------------------------------ Gaussian SDEs

def _gaussian_em(g0: GaussianState, t, noise, p: PhysParams, measure: str, smooth: bool = False):
    """Euler-Maruyama for (xm, km, varsigma); ``noise`` has shape (..., n).

    ``smooth`` drops the Ito corrections of the varsigma drifts; it is used
    when the increments come from subdividing a piecewise-linear path.
    """
    d = derive_constants(p)
    sl = math.sqrt(p.lambda_)
    hm = p.hbar / p.mass
    h = np.diff(t)
    sig = sigma_series(g0.sigma, t, d)
    if np.any(sig.real <= 0):
        raise InstabilityError("Re(sigma) <= 0 encountered; refine the time step")
    shape = noise.shape[:-1]
    n = len(t)
    xm = np.empty(shape + (n,))
    km = np.empty(shape + (n,))
    vs = np.empty(shape + (n,), dtype=complex)
    dxi = np.empty(noise.shape)
    xm[..., 0], km[..., 0], vs[..., 0] = g0.xm, g0.km, g0.varsigma
    x, k, v = xm[..., 0].copy(), km[..., 0].copy(), vs[..., 0].copy()
    ito = 0.0 if smooth else 1.0
    for j in range(n - 1):
        sr, si = sig[j].real, sig[j].imag
        if measure == "Q":
            innov = noise[..., j] - 2.0 * sl * x * h[j]
            dxi[..., j] = noise[..., j]
        else:
            innov = noise[..., j]
            dxi[..., j] = noise[..., j] + 2.0 * sl * x * h[j]
        dx = hm * k * h[j] + sl / (2.0 * sr) * innov
        dk = -sl * si / sr * innov
        dvr = (p.lambda_ * x * x + hm * si + ito * p.lambda_ / (4.0 * sr)) * h[j] + sl * x * innov
        dvi = (-0.5 * hm * k * k - hm * sr + ito * p.lambda_ * si / (4.0 * sr * sr)) * h[j] + sl * si / sr * x * innov
        x, k, v = x + dx, k + dk, v + dvr + 1j * dvi
        xm[..., j + 1], km[..., j + 1], vs[..., j + 1] = x, k, v
    if not (np.all(np.isfinite(xm)) and np.all(np.isfinite(vs))):
        raise NumericError("Gaussian parameters became non-finite")
    return GaussianTrajectory(np.asarray(t, dtype=float), sig, xm, km, vs, dxi)


def _refine(path: WienerPath, dt_sub: float | None):
    """Split each step into equal sub-steps, sharing its increment linearly."""
    t, dw = path.t_grid, path.increments
    if dt_sub is None or dt_sub >= np.max(path.dt) * (1 - 1e-12):
        return t, dw
    m = int(math.ceil(np.max(path.dt) / dt_sub - 1e-9))
    frac = np.arange(m + 1) / m
    tt = (t[:-1, None] + path.dt[:, None] * frac[None, 1:]).ravel()
    return np.concatenate(([0.0], tt)), np.repeat(dw / m, m)


def evolve_gaussian(g: GaussianState, path: WienerPath, p: PhysParams,
                    dt_sub: float | None = None) -> GaussianTrajectory:
    """Gaussian parameters along ``path`` (Q: driven by d xi, P: by dW).

    With ``dt_sub`` smaller than the path step, each increment is shared
    equally among sub-steps (piecewise-linear noise).  The returned trajectory
    lives on the refined grid; ``dxi`` holds the Q-increments actually used.
    """
    t, noise = _refine(path, dt_sub)
    return _gaussian_em(g, t, noise, p, path.measure, smooth=len(t) > path.n_steps + 1)


def evolve_gaussian_batch(g: GaussianState, t_grid, noise, p: PhysParams, measure: str = "Q"):
    """Vectorised version over a (n_paths, n_steps) increment matrix."""
    if measure not in ("Q", "P"):
        raise InvalidParameterError("measure must be Q or P")
    return _gaussian_em(g, np.asarray(t_grid, dtype=float), np.asarray(noise, dtype=float), p, measure)


# ------------------------------------------------------------------ asymptotic frame

def _asymptotic_em(a0: AsymptoticState, t, noise, p: PhysParams, measure: str, qexp=None):
    d = derive_constants(p)
    sl = math.sqrt(p.lambda_)
    hm = p.hbar / p.mass
    h = np.diff(t)
    shape = noise.shape[:-1]
    n = len(t)
    xb = np.empty(shape + (n,))
    kb = np.empty(shape + (n,))
    gm = np.empty(shape + (n,), dtype=complex)
    xb[..., 0], kb[..., 0], gm[..., 0] = a0.xbar, a0.kbar, a0.gamma
    x, k, g = xb[..., 0].copy(), kb[..., 0].copy(), gm[..., 0].copy()
    w4 = d.omega / 4.0
    for j in range(n - 1):
        if measure == "Q":
            innov = noise[..., j] - 2.0 * sl * x * h[j]
        else:
            hj = qexp[..., j] - x
            innov = noise[..., j] + 2.0 * sl * hj * h[j]
        dx = hm * k * h[j] + math.sqrt(hm) * innov
        dk = sl * innov
        dgr = (p.lambda_ * x * x + w4) * h[j] + sl * x * innov
        dgi = -(0.5 * hm * k * k + w4) * h[j] - sl * x * innov
        x, k, g = x + dx, k + dk, g + dgr + 1j * dgi
        xb[..., j + 1], kb[..., j + 1], gm[..., j + 1] = x, k, g
    return AsymptoticTrajectory(np.asarray(t, dtype=float), xb, kb, gm)


def evolve_asymptotic(a: AsymptoticState, path: WienerPath, qexp_or_none, p: PhysParams) -> AsymptoticTrajectory:
    """(xbar, kbar, gamma) by Euler-Maruyama.

    A Q path uses the d xi form.  A P path uses the dW form and needs the
    concurrent <q>_t series (left endpoints or full grid) for h = <q> - xbar.
    """
    if path.measure == "P":
        if qexp_or_none is None:
            raise InvalidParameterError("P-form needs the <q>_t series")
        q = np.asarray(qexp_or_none, dtype=float)
        if q.shape[-1] == path.n_steps + 1:
            q = q[..., :-1]
        if q.shape[-1] != path.n_steps:
            raise InvalidParameterError("<q>_t series does not match the path grid")
        return _asymptotic_em(a, path.t_grid, path.increments, p, "P", q)
    return _asymptotic_em(a, path.t_grid, path.increments, p, "Q")


def evolve_asymptotic_batch(a: AsymptoticState, t_grid, noise, p: PhysParams, measure: str = "Q", qexp=None):
    if measure == "P" and qexp is None:
        raise InvalidParameterError("P-form needs the <q>_t series")
    return _asymptotic_em(a, np.asarray(t_grid, dtype=float), np.asarray(noise, dtype=float), p, measure,
                          None if qexp is None else np.asarray(qexp, dtype=float))


def gamma_from_varsigma(varsigma, t, d: DerivedConstants):
    return np.asarray(varsigma) + (1 + 1j) * d.omega * np.asarray(t) / 4.0


def varsigma_from_gamma(gamma, t, d: DerivedConstants):
    return np.asarray(gamma) - (1 + 1j) * d.omega * np.asarray(t) / 4.0


# ------------------------------------------------------------------ asymptotic state

def psi_infinity(a: AsymptoticState, grid: GridSpec, d: DerivedConstants, tol: float = 1e-8) -> GridState:
    """Normalised fixed-shape Gaussian centred at xbar with wavenumber kbar."""
    z2 = d.z2
    # |psi|^2 ~ exp(-Re z^2 (x - xbar)^2): mass beyond each edge via erfc
    s = math.sqrt(z2.real)
    outside = 0.5 * (math.erfc(s * (a.xbar - grid.x0)) + math.erfc(s * (grid.x_end - a.xbar)))
    if outside > tol:
        raise CoverageError(f"asymptotic Gaussian loses {outside:.2e} of its mass outside the grid")
    x = grid.x
    pref = (z2.real / math.pi) ** 0.25
    phase = complex(a.gamma).imag - d.omega * a.t / 4.0
    v = pref * np.exp(-0.5 * z2 * (x - a.xbar) ** 2 + 1j * a.kbar * x + 1j * phase)
    st = GridState(grid, v, 0j, a.t)
    return st.normalized()


def gaussian_distance(sigma1, xm1, km1, sigma2, xm2, km2) -> float:
    """Phase-aligned distance between two normalised Gaussians, in closed form.

    Each state is ``exp(-sigma (x - xm)^2 + i km x)`` up to normalisation.
    Uses ``|| u - e^{i theta} v || = sqrt(2 - 2 |<u|v>|)`` with the overlap
    modulus evaluated in log space.
    """
    def coeffs(s, x0, k0):
        s = complex(s)
        return s, 2.0 * s * x0 + 1j * k0, -s * x0 * x0

    a1, b1, c1 = coeffs(sigma1, xm1, km1)
    a2, b2, c2 = coeffs(sigma2, xm2, km2)

    def log_int(a, b, c):
        # log |int exp(-a x^2 + b x + c) dx|, Re a > 0
        return (0.5 * cmath.log(math.pi / a) + b * b / (4.0 * a) + c).real

    lo = log_int(a1.conjugate() + a2, b1.conjugate() + b2, c1.conjugate() + c2)
    n1 = log_int(2.0 * a1.real, 2.0 * b1.real, 2.0 * c1.real)
    n2 = log_int(2.0 * a2.real, 2.0 * b2.real, 2.0 * c2.real)
    eps = 0.5 * (n1 + n2) - lo
    return math.sqrt(max(-2.0 * math.expm1(-eps), 0.0))


def spreads(state: GridState, hbar: float = 1.0):
    """Position and momentum spreads about the state's own means."""
    psi = state.values
    dx = state.dx
    w = np.abs(psi) ** 2
    norm = w.sum() * dx
    x = state.x
    mq = (w * x).sum() * dx / norm
    dq = math.sqrt((w * (x - mq) ** 2).sum() * dx / norm)
    phik = np.fft.fft(psi)
    k = state.grid.k
    wk = np.abs(phik) ** 2
    mk = (wk * k).sum() / wk.sum()
    dk = math.sqrt((wk * (k - mk) ** 2).sum() / wk.sum())
    return dq, hbar * dk, mq, hbar * mk


# ------------------------------------------------------------------ CSV dumps

def write_gaussian_csv(traj: GaussianTrajectory, filename, row: int | None = None) -> None:
    sel = (lambda a: a) if row is None else (lambda a: a[row])
    with Path(filename).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "sigma_re", "sigma_im", "xm", "km", "varsigma_re", "varsigma_im"])
        xm, km, vs = sel(traj.xm), sel(traj.km), sel(traj.varsigma)
        for j, t in enumerate(traj.t):
            w.writerow([repr(float(t)), repr(traj.sigma[j].real), repr(traj.sigma[j].imag),
                        repr(float(xm[j])), repr(float(km[j])), repr(vs[j].real), repr(vs[j].imag)])


def write_asymptotic_csv(traj: AsymptoticTrajectory, filename, row: int | None = None) -> None:
    sel = (lambda a: a) if row is None else (lambda a: a[row])
    with Path(filename).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "xbar", "kbar", "gamma_re", "gamma_im"])
        xb, kb, gm = sel(traj.xbar), sel(traj.kbar), sel(traj.gamma)
        for j, t in enumerate(traj.t):
            w.writerow([repr(float(t)), repr(float(xb[j])), repr(float(kb[j])), repr(gm[j].real), repr(gm[j].imag)])
