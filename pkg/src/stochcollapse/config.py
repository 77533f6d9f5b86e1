"""Run configuration: an INI-style file with sections, read by configparser.

Schema (all keys optional, defaults in brackets)::

    [physics]   hbar [1]  mass [1]  lambda [1]
    [grid]      n [1024]  dx [0.02]  center [0]
    [time]      t_end [2]  dt [1e-3]  checkpoints [t_end]   (comma separated)
    [run]       pathway [all]  n [1]  seed [0]  measure [Q]  workers [1]  out [results]
    [initial]   kind [gaussian]  width [1]  center [0]  momentum [0]
                separation [10]  weights [0.5, 0.5]            (double-gaussian)
                modes [0, 4]  coefficients [1, 1]              (eigenstate-mix)
                file                                           (file)
    [thresholds] ell  big_l [10]  tol [1e-3]  davies_c  n_max [40]

``width`` is the position spread of each Gaussian bump.  Only the output
directory may be overridden from the environment (``STOCHCOLLAPSE_OUT``).
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .params import PhysParams
from .state import GridSpec

PATHWAYS = ("kernel", "gaussian", "spectral", "grid")
INITIAL_KINDS = ("gaussian", "double-gaussian", "eigenstate-mix", "file")
OUT_ENV = "STOCHCOLLAPSE_OUT"


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "gaussian"
    width: float = 1.0
    center: float = 0.0
    momentum: float = 0.0
    separation: float = 10.0
    weights: tuple = (0.5, 0.5)
    modes: tuple = (0, 4)
    coefficients: tuple = (1.0, 1.0)
    file: str | None = None


@dataclass(frozen=True)
class RunConfig:
    physics: PhysParams = field(default_factory=PhysParams)
    grid_n: int = 1024
    grid_dx: float = 0.02
    grid_center: float = 0.0
    t_end: float = 2.0
    dt: float = 1e-3
    checkpoints: tuple = ()
    pathway: str = "all"
    n: int = 1
    seed: int = 0
    measure: str = "Q"
    workers: int = 1
    out: str = "results"
    initial: InitialSpec = field(default_factory=InitialSpec)
    ell: float | None = None
    big_l: float = 10.0
    tol: float = 1e-3
    davies_c: float | None = None
    n_max: int = 40

    def __post_init__(self):
        if not self.checkpoints:
            object.__setattr__(self, "checkpoints", (float(self.t_end),))
        if self.pathway not in PATHWAYS + ("all",):
            raise ConfigError(f"pathway must be one of {PATHWAYS + ('all',)}")
        if self.measure not in ("Q", "P"):
            raise ConfigError("measure must be Q or P")
        if self.n < 1:
            raise ConfigError("ensemble size must be >= 1")
        if not (self.dt > 0 and self.t_end > 0):
            raise ConfigError("dt and t_end must be positive")
        for t in self.checkpoints:
            if not 0 < t <= self.t_end * (1 + 1e-12):
                raise ConfigError(f"checkpoint {t} outside (0, t_end]")
        if self.initial.kind not in INITIAL_KINDS:
            raise ConfigError(f"initial kind must be one of {INITIAL_KINDS}")
        if self.initial.kind == "file" and not self.initial.file:
            raise ConfigError("initial kind 'file' needs a file key")

    @property
    def grid(self) -> GridSpec:
        return GridSpec.centered(self.grid_n, self.grid_dx, self.grid_center)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def checkpoint_steps(self) -> list[int]:
        return [max(1, int(round(t / self.dt))) for t in self.checkpoints]

    @property
    def pathways(self) -> tuple:
        return PATHWAYS if self.pathway == "all" else (self.pathway,)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["physics"] = {"hbar": self.physics.hbar, "mass": self.physics.mass, "lambda": self.physics.lambda_}
        return d

    def hash(self) -> str:
        """Short digest of everything except the output location."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}") from exc


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    known = {"physics", "grid", "time", "run", "initial", "thresholds"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    def get(sec, key, conv, default):
        if not cp.has_option(sec, key):
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc

    try:
        phys = PhysParams(get("physics", "hbar", float, 1.0), get("physics", "mass", float, 1.0),
                          get("physics", "lambda", float, 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fname = get("initial", "file", str, None)
    if fname and base_dir is not None and not Path(fname).is_absolute():
        fname = str(base_dir / fname)
    init = InitialSpec(
        kind=get("initial", "kind", str.strip, "gaussian"),
        width=get("initial", "width", float, 1.0),
        center=get("initial", "center", float, 0.0),
        momentum=get("initial", "momentum", float, 0.0),
        separation=get("initial", "separation", float, 10.0),
        weights=get("initial", "weights", _floats, (0.5, 0.5)),
        modes=tuple(int(m) for m in get("initial", "modes", _floats, (0, 4))),
        coefficients=get("initial", "coefficients", _floats, (1.0, 1.0)),
        file=fname,
    )
    t_end = get("time", "t_end", float, 2.0)
    return RunConfig(
        physics=phys,
        grid_n=get("grid", "n", int, 1024),
        grid_dx=get("grid", "dx", float, 0.02),
        grid_center=get("grid", "center", float, 0.0),
        t_end=t_end,
        dt=get("time", "dt", float, 1e-3),
        checkpoints=get("time", "checkpoints", _floats, ()),
        pathway=get("run", "pathway", str.strip, "all"),
        n=get("run", "n", int, 1),
        seed=get("run", "seed", int, 0),
        measure=get("run", "measure", str.strip, "Q"),
        workers=get("run", "workers", int, 1),
        out=os.environ.get(OUT_ENV) or get("run", "out", str.strip, "results"),
        initial=init,
        ell=get("thresholds", "ell", float, None),
        big_l=get("thresholds", "big_l", float, 10.0),
        tol=get("thresholds", "tol", float, 1e-3),
        davies_c=get("thresholds", "davies_c", float, None),
        n_max=get("thresholds", "n_max", int, 40),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), base_dir=path.parent)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        return replace(cfg, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def initial_state(cfg: RunConfig):
    """(GridState, GaussianState or None) described by ``cfg.initial``."""
    from .gaussian import GaussianState
    from .params import derive_constants
    from .spectral import eigenstate_matrix
    from .state import GridState, read_state_csv, resample

    ini, grid = cfg.initial, cfg.grid
    x = grid.x
    sigma = 1.0 / (4.0 * ini.width**2)
    if ini.kind == "gaussian":
        g = GaussianState.normalized(sigma, ini.center, ini.momentum)
        return g.on_grid(grid).normalized(), g
    if ini.kind == "double-gaussian":
        w = np.asarray(ini.weights, dtype=float)
        if w.size != 2 or np.any(w < 0) or w.sum() <= 0:
            raise ConfigError("double-gaussian needs two non-negative weights")
        w = w / w.sum()
        c = ini.center + 0.5 * ini.separation * np.array([-1.0, 1.0])
        v = sum(math.sqrt(wi) * np.exp(-sigma * (x - ci) ** 2 + 1j * ini.momentum * x) for wi, ci in zip(w, c))
        return GridState(grid, v).normalized(), None
    if ini.kind == "eigenstate-mix":
        if len(ini.modes) != len(ini.coefficients):
            raise ConfigError("modes and coefficients must have equal length")
        d = derive_constants(cfg.physics)
        rows = eigenstate_matrix(max(ini.modes), x - ini.center, d.z2)
        v = sum(cf * rows[m] for m, cf in zip(ini.modes, ini.coefficients))
        return GridState(grid, v).normalized(), None
    st = read_state_csv(ini.file)
    if not st.grid.same_as(grid):
        st = resample(st, grid)
    return st.normalized(), None
