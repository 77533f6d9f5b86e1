"""Direct grid integration of the norm-preserving collapse equation.

Each step is a Strang splitting: half a free kinetic step in Fourier space,
the collapse factor ``exp[sqrt(lambda)(x - <q>) dW - lambda (x - <q>)^2 dt]``,
another kinetic half step, then renormalisation.  ``<q>`` is taken from the
state at the start of the step.

Up to an x-independent constant the collapse factor equals
``exp[sqrt(lambda) x d xi - lambda x^2 dt]`` with the Girsanov-shifted
increment ``d xi = dW + 2 sqrt(lambda) <q> dt``, so the normalised scheme is
the split-step solver of the linear equation driven by ``xi``.  The recorded
``d xi`` therefore aligns the oracle with the exact pathways.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .params import PhysParams
from .state import GridSpec, GridState


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    grid: GridSpec
    scheme: str = "splitting"
    renormalize_each_step: bool = True
    free: bool = False  # lambda = 0 mode
    sponge: bool = False
    leak_tol: float = 1e-6

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.scheme not in ("splitting", "explicit"):
            raise ConfigError("scheme must be 'splitting' or 'explicit'")

    def check_stability(self, p: PhysParams) -> None:
        if self.scheme == "explicit":
            bound = self.grid.dx**2 * p.mass / (p.hbar * math.pi**2)
            if self.dt >= bound:
                raise ConfigError(f"explicit scheme needs dt < {bound:.3g}")


@dataclass
class Observables:
    norm: float
    qexp: float
    q_spread: float
    pexp: float
    p_spread: float


def observables(psi: GridState, hbar: float = 1.0) -> Observables:
    v = psi.values
    w = np.abs(v) ** 2
    s = w.sum()
    if s == 0 or not np.isfinite(s):
        raise NumericError("observables undefined for a zero or non-finite state")
    x = psi.x
    q = float((w * x).sum() / s)
    dq = math.sqrt(max(float((w * (x - q) ** 2).sum() / s), 0.0))
    f = np.fft.fft(v)
    wk = np.abs(f) ** 2
    k = psi.grid.k
    kk = float((wk * k).sum() / wk.sum())
    dk = math.sqrt(max(float((wk * (k - kk) ** 2).sum() / wk.sum()), 0.0))
    norm = math.sqrt(float(s * psi.dx)) * math.exp(psi.log_scale.real)
    return Observables(norm, q, dq, hbar * kk, hbar * dk)


def _sponge(n: int) -> np.ndarray:
    m = max(1, n // 20)
    ramp = np.sin(0.5 * math.pi * np.arange(m) / m) ** 2
    mask = np.ones(n)
    mask[:m] = ramp
    mask[-m:] = ramp[::-1]
    return mask


def _kinetic_phase(cfg: IntegratorConfig, p: PhysParams, frac: float) -> np.ndarray:
    k = cfg.grid.k
    return np.exp(-1j * p.hbar * k * k * cfg.dt * frac / (2.0 * p.mass))


def em_step(psi: GridState, dW: float, cfg: IntegratorConfig, p: PhysParams) -> GridState:
    """One step of the collapse equation for a single state."""
    out, _, _ = _step_batch(psi.values[None, :], np.array([psi.grid.x0]), np.array([dW]), cfg, p)
    return GridState(psi.grid.shifted(0), out[0], 0j, psi.t + cfg.dt, dict(psi.meta))


def _moments(v, x0, dx, spread=False):
    w = np.abs(v) ** 2
    s = w.sum(axis=-1)
    j = np.arange(v.shape[-1])
    mj = (w @ j) / s
    q = x0 + dx * mj
    if not spread:
        return q, s
    var = (w @ (j * j)) / s - mj * mj
    return q, s, dx * np.sqrt(np.maximum(var, 0.0))


def _step_batch(v, x0, dw, cfg: IntegratorConfig, p: PhysParams, kin_half=None, drive: str = "P"):
    """Advance rows of ``v`` (shape (m, n)) by one step; returns (v, qexp, dxi).

    With ``drive="Q"`` the given increments are d xi and the physical
    increment ``dW = d xi - 2 sqrt(lambda) <q> dt`` is formed on the fly.
    """
    dx = cfg.grid.dx
    n = v.shape[-1]
    q, _ = _moments(v, x0, dx)
    if drive == "Q":
        dw = dw - 2.0 * math.sqrt(p.lambda_) * q * cfg.dt
    if cfg.free:
        kin_full = _kinetic_phase(cfg, p, 1.0)
        v = np.fft.ifft(np.fft.fft(v, axis=-1) * kin_full, axis=-1)
        return v, q, np.zeros_like(q)
    sl = math.sqrt(p.lambda_)
    x = x0[:, None] + dx * np.arange(n)[None, :]
    y = x - q[:, None]
    if cfg.scheme == "splitting":
        kin_half = _kinetic_phase(cfg, p, 0.5) if kin_half is None else kin_half
        v = np.fft.ifft(np.fft.fft(v, axis=-1) * kin_half, axis=-1)
        expo = sl * y * dw[:, None] - p.lambda_ * y * y * cfg.dt
        if cfg.renormalize_each_step:
            expo -= expo.max(axis=1, keepdims=True)
        v = v * np.exp(expo)
        v = np.fft.ifft(np.fft.fft(v, axis=-1) * kin_half, axis=-1)
    else:
        lap = (np.roll(v, -1, axis=-1) - 2 * v + np.roll(v, 1, axis=-1)) / (dx * dx)
        v = v + 1j * p.hbar / (2 * p.mass) * lap * cfg.dt + sl * y * v * dw[:, None] \
            - 0.5 * p.lambda_ * y * y * v * cfg.dt
    if cfg.sponge:
        v = v * _sponge(n)
    if cfg.renormalize_each_step:
        s = np.sqrt((np.abs(v) ** 2).sum(axis=-1) * dx)
        if np.any(~np.isfinite(s)) or np.any(s == 0):
            raise NumericError("state norm vanished or overflowed during a step")
        v = v / s[:, None]
    dxi = dw + 2.0 * sl * q * cfg.dt
    return v, q, dxi


@dataclass
class OracleRun:
    t: np.ndarray
    values: np.ndarray  # (m, n) final states
    x0: np.ndarray  # (m,) final left edges
    qexp: np.ndarray  # (m, n_steps + 1)
    dxi: np.ndarray  # (m, n_steps)
    spread: np.ndarray | None = None  # (m, n_records) position spreads at record_every steps
    snapshots: dict = field(default_factory=dict)  # step index -> (values, x0)
    grid: GridSpec | None = None

    def state(self, row: int = 0, step: int | None = None) -> GridState:
        if step is None:
            v, x0 = self.values[row], self.x0[row]
            t = float(self.t[-1])
        else:
            v, x0 = self.snapshots[step][0][row], self.snapshots[step][1][row]
            t = float(self.t[step])
        return GridState(GridSpec(float(x0), self.grid.dx, self.grid.n), v, 0j, t)


def run_oracle(psi0, dW, cfg: IntegratorConfig, p: PhysParams, checkpoints=(), recenter: bool = False,
               recenter_frac: float = 0.1, leak_every: int = 50, record_every: int = 0,
               drive: str = "P") -> OracleRun:
    """Integrate one or many trajectories on a shared grid shape.

    Parameters
    ----------
    psi0 : GridState or sequence of GridState on grids of equal shape
    dW : (m, n_steps) increments, one row per trajectory: physical noise for
        ``drive="P"``, Q-measure increments d xi for ``drive="Q"``
    checkpoints : step indices at which snapshots are kept
    recenter : shift each row's grid by whole cells to follow <q>
    record_every : if positive, keep position spreads every that many steps
    """
    cfg.check_stability(p)
    if drive not in ("P", "Q"):
        raise ConfigError("drive must be 'P' or 'Q'")
    states = [psi0] if isinstance(psi0, GridState) else list(psi0)
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    m, n_steps = dW.shape
    if len(states) == 1 and m > 1:
        states = states * m
    if len(states) != m:
        raise ConfigError("need one initial state per noise row")
    g = cfg.grid
    v = np.array([s.normalized().values for s in states], dtype=complex)
    x0 = np.array([s.grid.x0 for s in states], dtype=float)
    if v.shape[1] != g.n:
        raise ConfigError("initial states must match the configured grid size")
    qs = np.empty((m, n_steps + 1))
    dxi = np.empty((m, n_steps))
    snaps = {}
    checkpoints = set(int(c) for c in checkpoints)
    if 0 in checkpoints:
        snaps[0] = (v.copy(), x0.copy())
    spread = [] if record_every > 0 else None
    kin_half = _kinetic_phase(cfg, p, 0.5)
    half = 0.5 * (g.n - 1) * g.dx
    edge = max(1, g.n // 20)
    for j in range(n_steps):
        if spread is not None and j % record_every == 0:
            spread.append(_moments(v, x0, g.dx, spread=True)[2])
        v, qs[:, j], dxi[:, j] = _step_batch(v, x0, dW[:, j], cfg, p, kin_half, drive)
        if recenter:
            qn, _ = _moments(v, x0, g.dx)
            off = qn - (x0 + half)
            shift = np.where(np.abs(off) > recenter_frac * half, np.rint(off / g.dx).astype(int), 0)
            for r in np.nonzero(shift)[0]:
                s = shift[r]
                v[r] = np.roll(v[r], -s)
                if s > 0:
                    v[r, -s:] = 0
                else:
                    v[r, :-s] = 0
                x0[r] += s * g.dx
        if (j + 1) % leak_every == 0:
            w = np.abs(v) ** 2
            leak = (w[:, :edge].sum(axis=1) + w[:, -edge:].sum(axis=1)) / w.sum(axis=1)
            if np.any(leak > cfg.leak_tol):
                warnings.warn(f"probability near grid edges reached {leak.max():.2e}", stacklevel=2)
        if j + 1 in checkpoints:
            snaps[j + 1] = (v.copy(), x0.copy())
    qs[:, -1], _, last = _moments(v, x0, g.dx, spread=True)
    if spread is not None:
        if n_steps % record_every == 0:
            spread.append(last)
        spread = np.array(spread).T
    t = cfg.dt * np.arange(n_steps + 1)
    return OracleRun(t, v, x0, qs, dxi, spread, snaps, g)


def free_gaussian_spread(s0: float, t: float, hbar: float = 1.0, mass: float = 1.0) -> float:
    """Spread of a free minimum-uncertainty packet."""
    return math.sqrt(s0**2 + (hbar * t / (2.0 * mass * s0)) ** 2)
