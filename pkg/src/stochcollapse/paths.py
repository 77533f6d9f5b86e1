"""Discretised Wiener paths, pathwise stochastic integrals and the Girsanov shift.

Every trajectory owns an independent generator stream derived from
``(master_seed, index)`` through :class:`numpy.random.SeedSequence` with
``spawn_key=(index,)``.  Streams therefore do not depend on the order in which
trajectories are generated or on how many workers generate them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AlignmentError, InvalidParameterError, NumericError

MEASURES = ("Q", "P")


def trajectory_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Generator for trajectory ``index`` of an ensemble seeded by ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(index),)))


@dataclass(frozen=True)
class WienerPath:
    t_grid: np.ndarray
    increments: np.ndarray
    seed: int = 0
    measure: str = "Q"
    index: int = 0

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        dw = np.asarray(self.increments, dtype=float)
        if t.ndim != 1 or dw.ndim != 1 or len(dw) != len(t) - 1:
            raise AlignmentError("need len(increments) == len(t_grid) - 1")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise InvalidParameterError("t_grid must start at 0 and increase strictly")
        if self.measure not in MEASURES:
            raise InvalidParameterError(f"measure must be one of {MEASURES}")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "increments", dw)

    @property
    def n_steps(self) -> int:
        return len(self.increments)

    @property
    def t_end(self) -> float:
        return float(self.t_grid[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t_grid)

    @property
    def values(self) -> np.ndarray:
        """Path values on ``t_grid``, starting at 0."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    def truncated(self, t: float) -> "WienerPath":
        """Leading part of the path up to the last grid point <= t (with rounding slack)."""
        k = int(np.searchsorted(self.t_grid, t * (1 + 1e-12) + 1e-300, side="right")) - 1
        if k < 1:
            raise InvalidParameterError("truncation time shorter than one step")
        return replace(self, t_grid=self.t_grid[: k + 1], increments=self.increments[:k])

    def coarsened(self, factor: int) -> "WienerPath":
        """Same Brownian path observed on every ``factor``-th grid point."""
        if self.n_steps % factor:
            raise InvalidParameterError("n_steps must be divisible by the coarsening factor")
        dw = self.increments.reshape(-1, factor).sum(axis=1)
        return replace(self, t_grid=self.t_grid[::factor], increments=dw)


def uniform_grid(n_steps: int, dt: float) -> np.ndarray:
    return dt * np.arange(n_steps + 1, dtype=float)


def sample_path(n_steps: int, dt: float, seed: int, index: int = 0, measure: str = "Q") -> WienerPath:
    if n_steps < 1:
        raise InvalidParameterError("n_steps must be >= 1")
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    rng = trajectory_rng(seed, index)
    dw = rng.standard_normal(n_steps) * math.sqrt(dt)
    return WienerPath(uniform_grid(n_steps, dt), dw, seed=int(seed), measure=measure, index=int(index))


def sample_increments(n_paths: int, n_steps: int, dt: float, seed: int, start: int = 0) -> np.ndarray:
    """Increment matrix of shape (n_paths, n_steps); row i uses stream (seed, start + i)."""
    if n_steps < 1 or n_paths < 1:
        raise InvalidParameterError("n_paths and n_steps must be >= 1")
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    out = np.empty((n_paths, n_steps))
    sq = math.sqrt(dt)
    for i in range(n_paths):
        out[i] = trajectory_rng(seed, start + i).standard_normal(n_steps) * sq
    return out


def girsanov_shift(w_path: WienerPath, qexp_series, lambda_: float) -> WienerPath:
    """P-noise W -> Q-noise xi with d xi = dW + 2 sqrt(lambda) <q>_t dt (left endpoint).

    ``qexp_series`` may be given on the full grid or on the left endpoints only.
    """
    if w_path.measure != "P":
        raise InvalidParameterError("girsanov_shift expects a P-measure path")
    q = _left_endpoints(w_path, qexp_series)
    dxi = w_path.increments + 2.0 * math.sqrt(lambda_) * q * w_path.dt
    return replace(w_path, increments=dxi, measure="Q")


def girsanov_unshift(xi_path: WienerPath, qexp_series, lambda_: float) -> WienerPath:
    """Inverse of :func:`girsanov_shift`."""
    if xi_path.measure != "Q":
        raise InvalidParameterError("girsanov_unshift expects a Q-measure path")
    q = _left_endpoints(xi_path, qexp_series)
    dw = xi_path.increments - 2.0 * math.sqrt(lambda_) * q * xi_path.dt
    return replace(xi_path, increments=dw, measure="P")


def _left_endpoints(path: WienerPath, series) -> np.ndarray:
    q = np.asarray(series, dtype=float)
    if q.ndim != 1:
        raise AlignmentError("expectation series must be one-dimensional")
    if len(q) == path.n_steps + 1:
        return q[:-1]
    if len(q) == path.n_steps:
        return q
    raise AlignmentError(f"series of length {len(q)} does not match a grid of {path.n_steps} steps")


class GirsanovDriver:
    """Incremental W -> xi conversion for coupled P-measure simulations.

    The expectation <q>_t is only known step by step during a forward run, so
    each call consumes the current <q> together with dW and returns d xi.
    """

    def __init__(self, lambda_: float):
        self.two_sqrt_lambda = 2.0 * math.sqrt(lambda_)
        self.dxi: list = []
        self.qexp: list = []

    def step(self, dw, qexp, dt):
        dxi = dw + self.two_sqrt_lambda * qexp * dt
        self.dxi.append(dxi)
        self.qexp.append(qexp)
        return dxi

    def xi_increments(self) -> np.ndarray:
        return np.array(self.dxi)


@dataclass(frozen=True)
class ItoIntegralResult:
    value: complex
    t_end: float


def ito_integral(path: WienerPath, integrand: Callable[[np.ndarray], np.ndarray]) -> ItoIntegralResult:
    """Left-endpoint sum  sum_k f(t_k) (xi_{k+1} - xi_k)."""
    f = np.asarray(integrand(path.t_grid[:-1]), dtype=complex)
    if f.shape == ():
        f = np.full(path.n_steps, complex(f))
    if not np.all(np.isfinite(f)):
        raise NumericError("integrand is not finite on the path grid")
    return ItoIntegralResult(complex(np.sum(f * path.increments)), path.t_end)


def write_path_csv(path: WienerPath, filename) -> None:
    filename = Path(filename)
    with filename.open("w", newline="") as fh:
        fh.write(f"# seed={path.seed} index={path.index} measure={path.measure}\n")
        w = csv.writer(fh)
        w.writerow(["t", "W" if path.measure == "P" else "xi"])
        for t, v in zip(path.t_grid, path.values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_path_csv(filename) -> WienerPath:
    meta = {}
    rows = []
    with Path(filename).open() as fh:
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    k, _, v = tok.partition("=")
                    meta[k] = v
                continue
            rows.append(line)
    reader = csv.reader(rows)
    next(reader)
    data = np.array([[float(a), float(b)] for a, b in reader])
    return WienerPath(
        data[:, 0], np.diff(data[:, 1]),
        seed=int(meta.get("seed", 0)), measure=meta.get("measure", "Q"), index=int(meta.get("index", 0)),
    )
