"""Ensemble statistics and physics diagnostics.

Collapse times, Born-rule frequencies, exponential decay fits, diffusion
moments of the asymptotic frame, the Gaussian-column frame of the kernel and
the norm factor ``r_t``.  All fits are ordinary least squares on
log-transformed data and report R^2.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import EstimationError, InvalidParameterError
from .kernel import KernelCoefficients
from .oracle import IntegratorConfig, run_oracle
from .params import DerivedConstants, PhysParams, derive_constants
from .state import GridState

SERIES = ("qexp", "spread", "norm", "distance", "xbar", "kbar", "h", "f", "r")


@dataclass
class TrajectoryRecord:
    """Diagnostic series of one trajectory, all aligned to ``times``.

    Series that a pathway does not produce are left as ``None``.
    """

    times: np.ndarray
    seed: int = 0
    index: int = 0
    qexp: np.ndarray | None = None
    spread: np.ndarray | None = None
    norm: np.ndarray | None = None
    distance: np.ndarray | None = None
    xbar: np.ndarray | None = None
    kbar: np.ndarray | None = None
    h: np.ndarray | None = None
    f: np.ndarray | None = None
    r: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name in SERIES:
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=float)
            if v.shape != self.times.shape:
                raise InvalidParameterError(f"series {name!r} has shape {v.shape}, times {self.times.shape}")
            if not np.all(np.isfinite(v)):
                raise InvalidParameterError(f"series {name!r} has non-finite entries")
            setattr(self, name, v)

    def available(self) -> list[str]:
        return [n for n in SERIES if getattr(self, n) is not None]

    def write_csv(self, filename) -> None:
        names = self.available()
        with Path(filename).open("w", newline="") as fh:
            fh.write(f"# seed={self.seed} index={self.index}\n")
            w = csv.writer(fh)
            w.writerow(["t"] + names)
            cols = [getattr(self, n) for n in names]
            for j, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(c[j])) for c in cols])


@dataclass
class EnsembleStats:
    times: np.ndarray
    n: int
    mean: dict
    var: dict
    collapse_times: np.ndarray | None = None
    collapse_positions: dict = field(default_factory=dict)
    region_frequencies: np.ndarray | None = None

    def std_error(self, name: str) -> np.ndarray:
        return np.sqrt(self.var[name] / self.n)


def ensemble_stats(records, ell: float | None = None, p: PhysParams | None = None) -> EnsembleStats:
    """Per-time means and (unbiased) variances over ``records`` in index order."""
    records = sorted(records, key=lambda r: r.index)
    if not records:
        raise EstimationError("no trajectories")
    times = records[0].times
    for r in records:
        if r.times.shape != times.shape or not np.allclose(r.times, times):
            raise InvalidParameterError("records have different time grids")
    n = len(records)
    mean, var = {}, {}
    for name in records[0].available():
        a = np.array([getattr(r, name) for r in records])
        mean[name] = a.mean(axis=0)
        var[name] = a.var(axis=0, ddof=1) if n > 1 else np.zeros(len(times))
    stats = EnsembleStats(times, n, mean, var)
    if ell is not None and records[0].spread is not None:
        ct = np.array([collapse_time(r, ell, p or PhysParams()) for r in records], dtype=object)
        tc = np.array([np.nan if c is None else c for c in ct], dtype=float)
        stats.collapse_times = tc
        ok = np.isfinite(tc)
        if ok.any() and records[0].qexp is not None:
            q = np.array([r.qexp for r in records])
            for label, tt in (("median", np.median(tc[ok])), ("mean", np.mean(tc[ok]))):
                j = int(np.argmin(np.abs(times - tt)))
                stats.collapse_positions[label] = (float(times[j]), q[:, j])
    return stats


# ------------------------------------------------------------------ collapse

def collapse_time(rec: TrajectoryRecord, ell: float, p: PhysParams = PhysParams()) -> float | None:
    """First recorded time at which the position spread is <= ``ell``."""
    d = derive_constants(p)
    if not ell > d.asymptotic_spread_q:
        raise InvalidParameterError(
            f"threshold {ell:g} must exceed the asymptotic spread {d.asymptotic_spread_q:g}")
    if rec.spread is None:
        raise InvalidParameterError("record carries no spread series")
    hit = np.nonzero(rec.spread <= ell)[0]
    return float(rec.times[hit[0]]) if hit.size else None


def deterministic_collapse_estimate(ell: float, p: PhysParams = PhysParams()) -> float:
    """Time at which a flat initial state reaches spread ``ell``.

    For an initial state much broader than ``ell`` the x-profile of the
    solution is the Gaussian ``exp(-alpha~_t x^2 / 2)``, whose spread is
    ``1/sqrt(2 Re alpha~_t)``.  Solves ``Re alpha~_t = 1/(2 ell^2)``.
    """
    d = derive_constants(p)
    target = 1.0 / (2.0 * ell * ell)

    def re_alpha(t):
        return ((2.0 * d.lambda_ / d.upsilon) * np.tanh(d.upsilon * t)).real

    # Re alpha~ rises monotonically up to its first maximum near t = 1.87/omega
    t_peak = 1.875 / d.omega
    if re_alpha(t_peak) < target:
        raise InvalidParameterError("threshold below the reachable spread of a flat initial state")
    return float(brentq(lambda t: re_alpha(t) - target, 1e-15 / d.omega, t_peak, xtol=1e-14))


# ------------------------------------------------------------------ Born rule

@dataclass
class BornReport:
    regions: list
    counts: np.ndarray
    frequencies: np.ndarray
    std_errors: np.ndarray
    reference_weights: np.ndarray
    smeared_weights: np.ndarray
    t_eval: float
    n: int

    @property
    def z_scores(self) -> np.ndarray:
        se = np.sqrt(self.reference_weights * (1 - self.reference_weights) / self.n)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, (self.frequencies - self.reference_weights) / se, 0.0)


def _check_regions(regions, d: DerivedConstants):
    regs = sorted((float(a), float(b)) for a, b in regions)
    for a, b in regs:
        if not b > a:
            raise InvalidParameterError(f"empty region [{a}, {b})")
        if b - a < 10.0 * d.asymptotic_spread_q:
            warnings.warn(f"region [{a:g}, {b:g}) is not much wider than the asymptotic spread", stacklevel=3)
    for (a0, b0), (a1, b1) in zip(regs, regs[1:]):
        if a1 < b0:
            raise InvalidParameterError("regions overlap")
    return [tuple(r) for r in regions]


def region_weights(psi: GridState, regions) -> np.ndarray:
    w = np.abs(psi.values) ** 2
    w = w / w.sum()
    x = psi.x
    return np.array([w[(x >= a) & (x < b)].sum() for a, b in regions])


def smeared_density(psi0: GridState, p: PhysParams, t: float) -> np.ndarray:
    """Free-evolved density convolved with sqrt(mu/pi) exp(-mu y^2).

    ``mu_t = 3 m / (2 hbar^2 lambda t^3)`` is the dimensionless form of the
    smearing rate.
    """
    cfg = IntegratorConfig(dt=t, grid=psi0.grid, free=True)
    run = run_oracle(psi0.normalized(), np.zeros((1, 1)), cfg, p)
    dens = np.abs(run.values[0]) ** 2
    mu = 3.0 * p.mass / (2.0 * p.hbar**2 * p.lambda_ * t**3)
    n = psi0.n
    y = psi0.dx * (np.arange(n) - n // 2)
    kern = np.sqrt(mu / math.pi) * np.exp(-mu * y * y) * psi0.dx
    out = np.convolve(dens, kern, mode="same")
    return out / (out.sum() * psi0.dx)


def born_rule_stats(positions, regions, psi0: GridState, p: PhysParams, t_eval: float) -> BornReport:
    """Region frequencies of ``<q>_{t_eval}`` against the prepared Born weights."""
    d = derive_constants(p)
    regions = _check_regions(regions, d)
    q = np.asarray(positions, dtype=float)
    n = q.size
    if n == 0:
        raise EstimationError("no trajectories")
    counts = np.array([np.count_nonzero((q >= a) & (q < b)) for a, b in regions])
    freq = counts / n
    se = np.sqrt(freq * (1 - freq) / n)
    ref = region_weights(psi0, regions)
    sm = smeared_density(psi0, p, t_eval)
    x = psi0.x
    smw = np.array([sm[(x >= a) & (x < b)].sum() * psi0.dx for a, b in regions])
    return BornReport(list(regions), counts, freq, se, ref, smw, float(t_eval), n)


# ------------------------------------------------------------------ fits

@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    n: int


def _ols(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    if sxx == 0:
        raise EstimationError("degenerate abscissa")
    slope = ((x - xm) * (y - ym)).sum() / sxx
    icpt = ym - slope * xm
    ss_res = ((y - icpt - slope * x) ** 2).sum()
    ss_tot = ((y - ym) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), float(r2)


def decay_fit(t, values, t_min: float = 0.0, t_max: float | None = None) -> DecayFit:
    """Least-squares slope of ``ln|value|`` against ``t`` for ``t >= t_min``."""
    t = np.asarray(t, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    sel = (t >= t_min) & (v > 0) & np.isfinite(v)
    if t_max is not None:
        sel &= t <= t_max
    if np.count_nonzero(sel) < 10:
        raise EstimationError("need at least 10 nonzero points beyond t_min")
    slope, icpt, r2 = _ols(t[sel], np.log(v[sel]))
    return DecayFit(slope, icpt, r2, int(np.count_nonzero(sel)))


def power_law_exponent(t, values) -> DecayFit:
    """Slope of ``ln value`` against ``ln t``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (t > 0) & (v > 0)
    if np.count_nonzero(sel) < 3:
        raise EstimationError("need at least 3 positive points")
    slope, icpt, r2 = _ols(np.log(t[sel]), np.log(v[sel]))
    return DecayFit(slope, icpt, r2, int(np.count_nonzero(sel)))


def convergence_order(dts, errors) -> float:
    """Slope of ln(error) against ln(dt)."""
    return power_law_exponent(dts, errors).rate


# ------------------------------------------------------------------ diffusion

def exact_xbar_variance(t, p: PhysParams = PhysParams()):
    """Var[xbar_t] for an ensemble started on the asymptotic state (h = 0).

    With ``xbar = (hbar/m) sqrt(lambda) int W + sqrt(hbar/m) W`` this is
    ``(hbar/m omega)(tau^3/12 + tau^2/2 + tau)``, ``tau = omega t``.
    """
    d = derive_constants(p)
    tau = d.omega * np.asarray(t, dtype=float)
    return p.hbar / (p.mass * d.omega) * (tau**3 / 12.0 + tau**2 / 2.0 + tau)


@dataclass
class DiffusionReport:
    times: np.ndarray
    var_x: np.ndarray
    var_k: np.ndarray
    mean_x: np.ndarray
    mean_x_se: np.ndarray
    k_slope: float
    k_ratio: np.ndarray
    x_exponent: DecayFit | None
    x_exponent_window: tuple | None
    scale_x: np.ndarray
    scale_x_short: np.ndarray
    n: int

    def ratio_at(self, t: float) -> float:
        return float(self.k_ratio[int(np.argmin(np.abs(self.times - t)))])


def diffusion_stats(times, xbar, kbar, p: PhysParams, window: tuple | None = None) -> DiffusionReport:
    """Moments of the frame coordinates over an ensemble of shape (N, n_t)."""
    t = np.asarray(times, dtype=float)
    xb = np.atleast_2d(np.asarray(xbar, dtype=float))
    kb = np.atleast_2d(np.asarray(kbar, dtype=float))
    n = xb.shape[0]
    if n < 100:
        warnings.warn(f"only {n} trajectories; diffusion statistics are unreliable", stacklevel=2)
    if n < 2:
        raise EstimationError("need at least two trajectories")
    vx = xb.var(axis=0, ddof=1)
    vk = kb.var(axis=0, ddof=1)
    lt = p.lambda_ * t
    pos = t > 0
    k_slope = float((lt[pos] * vk[pos]).sum() / (lt[pos] ** 2).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pos, vk / np.where(pos, lt, 1.0), np.nan)
    fit = None
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        fit = power_law_exponent(t[sel], vx[sel])
    hm = p.hbar / p.mass
    return DiffusionReport(
        t, vx, vk, xb.mean(axis=0), np.sqrt(vx / n), k_slope, ratio, fit, window,
        math.sqrt(p.lambda_) * hm * (2.0 / 3.0) * t**1.5, np.sqrt(hm * t), n,
    )


# ------------------------------------------------------------------ frames and norms

def gaussian_frame(coeffs: KernelCoefficients):
    """Mean position and wavenumber of the kernel column ``G_t(., 0)``."""
    if not np.all(np.asarray(coeffs.t) > 0):
        raise InvalidParameterError("frame needs t > 0")
    return gaussian_frame_arrays(coeffs.alpha, coeffs.abar)


def gaussian_frame_arrays(alpha, abar):
    alpha = np.asarray(alpha)
    abar = np.asarray(abar)
    xg = abar.real / alpha.real
    kg = abar.imag - alpha.imag / alpha.real * abar.real
    return xg, kg


def r_from_innovations(times, h, dW, lambda_: float) -> np.ndarray:
    """``r_t`` from the exponential formula with left-endpoint Ito sums.

    ``h`` and ``times`` have length n+1, ``dW`` length n.
    """
    t = np.asarray(times, dtype=float)
    h = np.asarray(h, dtype=float)
    dW = np.asarray(dW, dtype=float)
    dt = np.diff(t)
    sl = math.sqrt(lambda_)
    inc = 2.0 * sl * h[..., :-1] * dW + 2.0 * lambda_ * h[..., :-1] ** 2 * dt
    log_r2 = np.concatenate((np.zeros(h.shape[:-1] + (1,)), np.cumsum(inc, axis=-1)), axis=-1)
    return np.exp(0.5 * log_r2)


def r_from_norm(times, norm, gamma_re, omega: float) -> np.ndarray:
    """``r_t = ||phi_t|| exp(-gamma^R_t + omega t / 4)``."""
    t = np.asarray(times, dtype=float)
    return np.asarray(norm) * np.exp(-np.asarray(gamma_re) + omega * t / 4.0)


def reweighted_mean(values, norm_sq):
    """E_Q[X ||phi||^2] and its standard error: the P-mean of X estimated from Q-runs."""
    w = np.asarray(values, dtype=float) * np.asarray(norm_sq, dtype=float)
    n = w.shape[0]
    return w.mean(axis=0), w.std(axis=0, ddof=1) / math.sqrt(n)


def mean_with_error(values):
    a = np.asarray(values, dtype=float)
    return a.mean(axis=0), a.std(axis=0, ddof=1) / math.sqrt(a.shape[0])


def recrossings(qexp, boundary: float) -> np.ndarray:
    """Number of sign changes of ``<q>_t - boundary`` per trajectory."""
    s = np.sign(np.atleast_2d(qexp) - boundary)
    return np.count_nonzero(np.diff(s, axis=-1) != 0, axis=-1)
