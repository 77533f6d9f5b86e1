"""Command-line front end.

Verbs: ``run``, ``compare-states``, ``estimate-davies``, ``regime-times``.
Exit status is 0 on success, 2 for configuration or usage errors and 1 for
numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import plots
from .analysis import decay_fit, ensemble_stats, mean_with_error
from .config import RunConfig, initial_state, load_config, with_overrides
from .ensemble import gaussian_ensemble, oracle_ensemble, spectral_state
from .errors import CollapseError, ConfigError, EstimationError, NumericError, ValidityError
from .gaussian import evolve_gaussian
from .kernel import apply_kernel, kernel_coefficients
from .oracle import IntegratorConfig, run_oracle
from .params import (HBAR_SI, LAMBDA0_SI, NUCLEON_MASS_SI, PhysParams, alpha_real_limits, derive_constants,
                     regime_times)
from .paths import WienerPath, sample_increments, uniform_grid
from .spectral import expansion, projector_norms, t_bar
from .state import compare_states, read_state_csv, write_state_csv

log = logging.getLogger("stochcollapse")


class TrajectoryFailure(NumericError):
    pass


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def _q_increments(cfg: RunConfig, psi0, g0):
    """Q-measure increments (n, n_steps) shared by every pathway.

    Under Q they are the sampled increments.  Under P the sampled rows are
    physical noise and the Q increments come from the Girsanov shift along
    the Gaussian solution (Gaussian data) or the grid oracle.
    """
    noise = sample_increments(cfg.n, cfg.n_steps, cfg.dt, cfg.seed)
    t = uniform_grid(cfg.n_steps, cfg.dt)
    if cfg.measure == "Q":
        return t, noise, None
    if g0 is not None:
        from .gaussian import evolve_gaussian_batch
        tr = evolve_gaussian_batch(g0, t, noise, cfg.physics, "P")
        return t, tr.dxi, None
    ocfg = IntegratorConfig(cfg.dt, cfg.grid)
    run = run_oracle(psi0, noise, ocfg, cfg.physics, checkpoints=cfg.checkpoint_steps)
    return t, run.dxi, run


def run_experiment(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    for sub in ("states", "series", "figures"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    p = cfg.physics
    d = derive_constants(p)
    chash = cfg.hash()
    stamp = f"config {chash} seed {cfg.seed}"
    psi0, g0 = initial_state(cfg)
    grid = cfg.grid
    steps = cfg.checkpoint_steps
    report = {"config": cfg.to_dict(), "config_hash": chash, "seed": cfg.seed,
              "trajectory_streams": [[cfg.seed, i] for i in range(cfg.n)], "notes": []}
    checks = []

    try:
        t, dxi, p_run = _q_increments(cfg, psi0, g0)
    except ArithmeticError as exc:
        raise TrajectoryFailure(f"noise alignment, trajectories 0..{cfg.n - 1} (seed {cfg.seed}): {exc}") from exc

    # oracle states at the checkpoints, on the shared grid
    oracle_states = None
    if "grid" in cfg.pathways:
        try:
            oracle_states = p_run or run_oracle(psi0, dxi, IntegratorConfig(cfg.dt, grid), p,
                                                checkpoints=steps, drive="Q")
        except ArithmeticError as exc:
            raise TrajectoryFailure(f"grid oracle, trajectories 0..{cfg.n - 1} (seed {cfg.seed}): {exc}") from exc

    exp = None
    c = cfg.davies_c
    if "spectral" in cfg.pathways:
        if c is None:
            c = projector_norms(cfg.n_max, d).c
        exp = expansion(psi0, d, n_max=cfg.n_max, c=c)
        report["spectral"] = {"c": c, "t_bar": t_bar(c, d), "n_max": cfg.n_max,
                              "reconstruction_residual": _reconstruction_residual(exp, psi0, d)}
    if "gaussian" in cfg.pathways and g0 is None:
        report["notes"].append("gaussian pathway skipped: initial state is not Gaussian")

    dist_rows = []
    norms = np.full((cfg.n, len(steps)), np.nan)
    last_states = {}
    for i in range(cfg.n):
        path = WienerPath(t, dxi[i], seed=cfg.seed, measure="Q", index=i)
        gtraj = None
        if "gaussian" in cfg.pathways and g0 is not None:
            gtraj = evolve_gaussian(g0, path, p)
        for j, k in enumerate(steps):
            tk = float(t[k])
            states = {}
            try:
                if "kernel" in cfg.pathways:
                    states["kernel"] = apply_kernel(kernel_coefficients(path, tk, d), psi0, grid)
                    norms[i, j] = states["kernel"].norm_sq()
                if gtraj is not None:
                    states["gaussian"] = gtraj.state(k).on_grid(grid)
                if exp is not None:
                    try:
                        states["spectral"] = spectral_state(exp, path.truncated(tk), tk, p, grid)
                    except ValidityError as exc:
                        report["notes"].append(f"spectral refused at t={tk:.4g}: {exc}")
                if oracle_states is not None:
                    states["grid"] = oracle_states.state(i, k)
            except ArithmeticError as exc:
                raise TrajectoryFailure(f"trajectory {i} (seed {cfg.seed}) at t={tk:.4g}: {exc}") from exc
            for name, st in states.items():
                write_state_csv(st, out / "states" / f"{name}_traj{i:04d}_t{tk:.6g}.csv",
                                seed=cfg.seed, index=i, measure=cfg.measure, pathway=name, config_hash=chash)
            names = sorted(states)
            for a in range(len(names)):
                for b in range(a + 1, len(names)):
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        dd = compare_states(states[names[a]], states[names[b]])["distance"]
                    dist_rows.append((i, tk, names[a], names[b], dd))
            if i == 0 and j == len(steps) - 1:
                last_states = states

    with (out / "distances.csv").open("w", newline="") as fh:
        fh.write(f"# config_hash={chash} seed={cfg.seed}\n")
        w = csv.writer(fh)
        w.writerow(["index", "t", "a", "b", "distance"])
        for row in dist_rows:
            w.writerow([row[0], repr(row[1]), row[2], row[3], repr(row[4])])
    if dist_rows:
        pairs = {}
        for i, tk, a, b, dd in dist_rows:
            pairs.setdefault(f"{a}-{b}", []).append(dd)
        report["pairwise_max_distance"] = {k: max(v) for k, v in pairs.items()}
        for k, v in pairs.items():
            checks.append({"name": f"cross-pathway {k}", "value": max(v), "threshold": cfg.tol,
                           "pass": bool(max(v) < cfg.tol)})

    if "kernel" in cfg.pathways and cfg.measure == "Q":
        m, se = mean_with_error(norms) if cfg.n > 1 else (norms[0], np.full(len(steps), np.nan))
        report["norm_sq"] = {"t": [float(t[k]) for k in steps], "mean": m, "std_error": se}
        if cfg.n > 1:
            z = np.abs(m - 1.0) / se
            checks.append({"name": "Q-martingale mean norm^2", "value": float(np.max(z)), "threshold": 3.0,
                           "pass": bool(np.all(z <= 3.0))})

    report["diagnostics"] = _diagnostics(cfg, psi0, g0, out, chash, stamp, checks)

    if last_states:
        plots.plot_states(last_states, out / "figures" / "states.png", stamp,
                          title=f"trajectory 0, t = {float(t[steps[-1]]):.4g}")
    report["checks"] = checks
    with (out / "report.json").open("w") as fh:
        json.dump(report, fh, indent=2, default=_json_default)
    with (out / "summary.json").open("w") as fh:
        json.dump({"config_hash": chash, "seed": cfg.seed, "checks": checks,
                   "all_pass": all(c["pass"] for c in checks)}, fh, indent=2, default=_json_default)
    return report


def _reconstruction_residual(exp, psi0, d) -> float:
    from .spectral import reconstruct
    from .state import phase_aligned_distance
    return phase_aligned_distance(reconstruct(exp.alphas, psi0.grid, d), psi0)


def _diagnostics(cfg: RunConfig, psi0, g0, out: Path, chash: str, stamp: str, checks: list) -> dict:
    """Physical-measure diagnostic series (fast path for Gaussian data, grid oracle otherwise)."""
    p = cfg.physics
    d = derive_constants(p)
    every = max(1, cfg.n_steps // 200)
    if g0 is not None:
        recs = gaussian_ensemble(g0, p, cfg.dt, cfg.n_steps, cfg.n, cfg.seed, measure="P",
                                 record_every=every, distance=True, workers=cfg.workers)
        source = "gaussian"
    else:
        ocfg = IntegratorConfig(cfg.dt, cfg.grid)
        recs = oracle_ensemble(psi0, p, ocfg, cfg.n_steps, cfg.n, cfg.seed, record_every=every,
                               distance=True, workers=cfg.workers)
        source = "grid"
    for r in recs:
        r.write_csv(out / "series" / f"traj{r.index:04d}.csv")
        # append the config hash to the header line
        path = out / "series" / f"traj{r.index:04d}.csv"
        lines = path.read_text().splitlines(True)
        lines[0] = lines[0].rstrip("\n") + f" config_hash={chash}\n"
        path.write_text("".join(lines))
    stats = ensemble_stats(recs, ell=cfg.ell, p=p)
    tt = stats.times
    res = {"source": source, "measure": "P", "n": stats.n, "times": tt,
           "mean": stats.mean, "var": stats.var}
    t_min = 3.0 * t_bar(cfg.davies_c or 1.0, d)
    fits = {}
    for name in ("distance", "h", "f"):
        if recs[0].available().count(name) == 0:
            continue
        per = []
        for r in recs:
            try:
                per.append(decay_fit(tt, getattr(r, name), t_min).rate)
            except EstimationError:
                break
        if len(per) == len(recs):
            ok = np.abs(np.array(per) / (-d.omega / 2) - 1) <= 0.25
            fits[name] = {"t_min": t_min, "rates": per, "median_rate": float(np.median(per)),
                          "fraction_within_25pct": float(ok.mean())}
            checks.append({"name": f"decay rate of {name}", "value": float(ok.mean()), "threshold": 0.8,
                           "pass": bool(ok.mean() >= 0.8)})
    if not fits:
        res["note"] = f"run shorter than needed for decay fits beyond t = {t_min:.3g}"
    res["decay_fits"] = fits
    if stats.collapse_times is not None:
        ct = stats.collapse_times
        res["collapse_times"] = {"samples": ct, "median": float(np.nanmedian(ct)) if np.isfinite(ct).any() else None}
        res["collapse_positions"] = {k: {"t": v[0], "values": v[1]} for k, v in stats.collapse_positions.items()}
    figs = out / "figures"
    plots.plot_series(tt, {"distance": np.array([r.distance for r in recs])}, figs / "distance.png",
                      r"$\|\psi_t - \psi^\infty_t\|$", logy=True, stamp=stamp)
    plots.plot_series(tt, {"<q>": np.array([r.qexp for r in recs])}, figs / "qexp.png", r"$\langle q\rangle_t$",
                      stamp=stamp)
    plots.plot_series(tt, {"spread": np.array([r.spread for r in recs])}, figs / "spread.png",
                      r"$\Delta q_t$", stamp=stamp)
    plots.plot_series(tt, {"|h|": np.array([r.h for r in recs])}, figs / "h.png", r"$|h_t|$", logy=True,
                      stamp=stamp)
    return res


# ------------------------------------------------------------------ verbs

def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = with_overrides(cfg, seed=args.seed, n=args.n, pathway=args.pathway, out=args.out)
    report = run_experiment(cfg)
    failed = [c["name"] for c in report["checks"] if not c["pass"]]
    print(f"wrote {cfg.out}/report.json ({len(report['checks'])} checks, {len(failed)} failed)")
    for name, v in report.get("pairwise_max_distance", {}).items():
        print(f"  max distance {name}: {v:.3e}")
    return 0


def cmd_compare(args) -> int:
    a = read_state_csv(args.a)
    b = read_state_csv(args.b)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = compare_states(a, b)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(json.dumps(res))
    return 0


def cmd_davies(args) -> int:
    pn = projector_norms(args.n_max)
    d = derive_constants(PhysParams(lambda_=args.lambda_))
    res = {"c": pn.c, "t_bar": t_bar(pn.c, d), "n_max": args.n_max,
           "log_norm_over_n": [float(v) for v in np.log(pn.norms[1:]) / np.arange(1, len(pn.norms))]}
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with Path(args.out).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "projector_norm"])
            for n, v in enumerate(pn.norms):
                w.writerow([n, repr(float(v))])
    print(json.dumps(res, indent=2))
    return 0


def cmd_regime(args) -> int:
    if args.mass is not None:
        p = PhysParams.si_grw(args.mass, args.lambda0, hbar=args.hbar, nucleon_mass=args.nucleon_mass)
    else:
        p = PhysParams(lambda_=args.lambda_)
    rt = regime_times(p, args.ell, args.big_l)
    d = derive_constants(p)
    small, large = alpha_real_limits(p)
    print(json.dumps({"lambda": p.lambda_, "omega": d.omega, "t1": rt.t1, "t2": rt.t2,
                      "alpha_re_small_t_slope": small, "alpha_re_large_t": large}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochcollapse", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="simulate the configured pathways and write a report")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--n", type=int)
    r.add_argument("--pathway", choices=["kernel", "gaussian", "spectral", "grid", "all"])
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare-states", help="phase-aligned distance between two state CSV files")
    c.add_argument("a")
    c.add_argument("b")
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("estimate-davies", help="fit the projector-norm growth constant")
    e.add_argument("--n-max", type=int, default=40)
    e.add_argument("--lambda", dest="lambda_", type=float, default=1.0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_davies)

    g = sub.add_parser("regime-times", help="collapse and classical-regime time scales")
    g.add_argument("--mass", type=float, help="particle mass in kg (SI mode)")
    g.add_argument("--lambda0", type=float, default=LAMBDA0_SI)
    g.add_argument("--hbar", type=float, default=HBAR_SI)
    g.add_argument("--nucleon-mass", type=float, default=NUCLEON_MASS_SI)
    g.add_argument("--lambda", dest="lambda_", type=float, default=1.0, help="coupling (dimensionless mode)")
    g.add_argument("--ell", type=float, default=1e-7)
    g.add_argument("--big-l", type=float, default=1e-3)
    g.set_defaults(func=cmd_regime)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except (CollapseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
