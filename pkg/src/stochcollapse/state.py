"""Wave functions sampled on uniform one-dimensional grids.

A :class:`GridState` stores ``psi(x_j) = exp(log_scale) * values[j]`` on
``x_j = x0 + j dx``.  The complex ``log_scale`` keeps huge or tiny global
factors (and global phases) out of the sampled values.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import AlignmentError, CoverageError, InvalidParameterError, NumericError


@dataclass(frozen=True)
class GridSpec:
    x0: float
    dx: float
    n: int

    def __post_init__(self):
        if not self.dx > 0 or self.n < 2:
            raise InvalidParameterError("grid needs dx > 0 and at least two points")

    @classmethod
    def centered(cls, n: int = 2048, dx: float = 0.02, center: float = 0.0) -> "GridSpec":
        return cls(center - dx * (n // 2), dx, n)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def x_end(self) -> float:
        return self.x0 + self.dx * (self.n - 1)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def shifted(self, cells: int) -> "GridSpec":
        return replace(self, x0=self.x0 + cells * self.dx)

    def same_as(self, other: "GridSpec", rtol: float = 1e-12) -> bool:
        return (
            self.n == other.n
            and math.isclose(self.dx, other.dx, rel_tol=rtol)
            and abs(self.x0 - other.x0) <= rtol * max(1.0, abs(self.x0)) + 1e-9 * self.dx
        )


@dataclass(frozen=True)
class GridState:
    grid: GridSpec
    values: np.ndarray
    log_scale: complex = 0j
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if not np.iscomplexobj(v):
            v = v.astype(complex)
        if v.shape != (self.grid.n,):
            raise AlignmentError(f"values has shape {v.shape}, grid has {self.grid.n} points")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "log_scale", complex(self.log_scale))

    @classmethod
    def from_function(cls, grid: GridSpec, func, t: float = 0.0, **meta) -> "GridState":
        return cls(grid, np.asarray(func(grid.x), dtype=complex), 0j, t, dict(meta))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def dx(self) -> float:
        return self.grid.dx

    @property
    def n(self) -> int:
        return self.grid.n

    def full_values(self) -> np.ndarray:
        """Values with the global factor applied (may overflow for extreme log_scale)."""
        return self.values * np.exp(self.log_scale)

    def log_norm(self) -> float:
        """log of the L2 norm, evaluated without leaving log space."""
        s = float(np.sum(np.abs(self.values) ** 2) * self.dx)
        if s == 0.0:
            return -math.inf
        return 0.5 * math.log(s) + self.log_scale.real

    def norm(self) -> float:
        return math.exp(self.log_norm())

    def norm_sq(self) -> float:
        return math.exp(2.0 * self.log_norm())

    def normalized(self) -> "GridState":
        s = math.sqrt(float(np.sum(np.abs(self.values) ** 2) * self.dx))
        if s == 0.0 or not math.isfinite(s):
            raise NumericError("cannot normalise a state of zero or non-finite norm")
        return replace(self, values=self.values / s, log_scale=1j * self.log_scale.imag)

    def rescaled(self) -> "GridState":
        """Move the peak magnitude of ``values`` into ``log_scale``."""
        m = float(np.max(np.abs(self.values)))
        if m == 0.0:
            return self
        return replace(self, values=self.values / m, log_scale=self.log_scale + math.log(m))

    def with_values(self, values, log_scale=None, t=None) -> "GridState":
        return replace(
            self, values=values,
            log_scale=self.log_scale if log_scale is None else log_scale,
            t=self.t if t is None else t,
        )

    def edge_fraction(self, cells: int | None = None) -> float:
        """Fraction of probability carried by the outer 5% of the grid."""
        cells = cells or max(1, self.n // 20)
        p = np.abs(self.values) ** 2
        tot = p.sum()
        return float((p[:cells].sum() + p[-cells:].sum()) / tot) if tot > 0 else 0.0

    def check_coverage(self, tol: float = 1e-8) -> None:
        if self.edge_fraction() > tol:
            raise CoverageError(f"state mass near the grid edges exceeds {tol:g}")


def inner(a: GridState, b: GridState) -> complex:
    """<a|b> (conjugate-linear in a) including both global factors."""
    _require_same_grid(a, b)
    s = complex(np.sum(np.conj(a.values) * b.values) * a.dx)
    return s * np.exp(np.conj(a.log_scale) + b.log_scale)


def _require_same_grid(a: GridState, b: GridState) -> None:
    if not a.grid.same_as(b.grid):
        raise AlignmentError("states live on different grids")


def phase_aligned_distance(a: GridState, b: GridState) -> float:
    """min over theta of || a/|a| - exp(i theta) b/|b| ||."""
    _require_same_grid(a, b)
    return phase_aligned_distance_values(a.values, b.values, a.dx)


def phase_aligned_distance_values(u: np.ndarray, v: np.ndarray, dx: float) -> float:
    nu = math.sqrt(float(np.sum(np.abs(u) ** 2)))
    nv = math.sqrt(float(np.sum(np.abs(v) ** 2)))
    if nu == 0 or nv == 0:
        raise NumericError("distance undefined for a zero state")
    u = u / nu
    v = v / nv
    ov = np.vdot(v, u)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v))


def resample(state: GridState, grid: GridSpec) -> GridState:
    """Linear interpolation onto ``grid``; zero outside the source support."""
    x = state.x
    re = np.interp(grid.x, x, state.values.real, left=0.0, right=0.0)
    im = np.interp(grid.x, x, state.values.imag, left=0.0, right=0.0)
    return GridState(grid, re + 1j * im, state.log_scale, state.t, dict(state.meta))


def state_hash(state: GridState) -> str:
    return hashlib.sha256(np.ascontiguousarray(state.values).tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------- CSV format
#
#   # t=<float> seed=<int> measure=<Q|P> log_scale_re=<float> log_scale_im=<float> [key=value ...]
#   x,re,im
#   ...

def write_state_csv(state: GridState, filename, **extra) -> None:
    meta = {"seed": state.meta.get("seed", 0), "measure": state.meta.get("measure", "Q")}
    meta.update({k: v for k, v in state.meta.items() if k not in meta})
    meta.update(extra)
    header = (
        f"# t={state.t!r} log_scale_re={state.log_scale.real!r} log_scale_im={state.log_scale.imag!r} "
        + " ".join(f"{k}={v}" for k, v in meta.items())
    )
    data = np.column_stack([state.x, state.values.real, state.values.imag])
    with Path(filename).open("w") as fh:
        fh.write(header + "\n")
        fh.write("x,re,im\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def read_state_csv(filename) -> GridState:
    filename = Path(filename)
    with filename.open() as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise InvalidParameterError(f"{filename}: missing state header line")
    meta = {}
    for tok in first[1:].split():
        k, _, v = tok.partition("=")
        meta[k] = v
    data = np.loadtxt(filename, delimiter=",", skiprows=2, ndmin=2)
    x = data[:, 0]
    if len(x) < 2:
        raise InvalidParameterError(f"{filename}: need at least two grid points")
    dx = (x[-1] - x[0]) / (len(x) - 1)
    if np.max(np.abs(np.diff(x) - dx)) > 1e-9 * max(1.0, abs(dx)) * len(x):
        raise InvalidParameterError(f"{filename}: grid is not uniform")
    t = float(meta.pop("t", 0.0))
    ls = complex(float(meta.pop("log_scale_re", 0.0)), float(meta.pop("log_scale_im", 0.0)))
    return GridState(GridSpec(float(x[0]), float(dx), len(x)), data[:, 1] + 1j * data[:, 2], ls, t, meta)


def compare_states(a: GridState, b: GridState) -> dict:
    """Phase-aligned normalised distance, resampling ``b`` onto ``a`` if grids differ."""
    resampled = False
    if not a.grid.same_as(b.grid):
        lo = max(a.grid.x0, b.grid.x0)
        hi = min(a.grid.x_end, b.grid.x_end)
        if lo >= hi:
            raise AlignmentError("state grids do not overlap")
        warnings.warn("grids differ; resampling second state by linear interpolation", stacklevel=2)
        b = resample(b, a.grid)
        resampled = True
    return {"distance": phase_aligned_distance(a, b), "resampled": resampled}
