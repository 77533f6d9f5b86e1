"""Trajectory ensembles for the four solution pathways.

Every trajectory ``i`` of an ensemble draws its noise from the stream
``(master_seed, i)``, so results do not depend on how trajectories are split
into chunks or spread over worker processes.  Chunks are mapped in order and
concatenated by trajectory index.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .analysis import TrajectoryRecord, gaussian_frame_arrays, r_from_innovations
from .errors import InvalidParameterError
from .gaussian import (AsymptoticState, GaussianState, evolve_asymptotic_batch, evolve_gaussian_batch,
                       gaussian_distance, psi_infinity)
from .kernel import (apply_kernel, boost_frame, boost_series, deterministic_coeffs, kernel_coefficients,
                     log_k, stochastic_series, zeta_bar, KernelCoefficients, _path_index)
from .oracle import IntegratorConfig, run_oracle
from .params import PhysParams, derive_constants
from .paths import WienerPath, sample_increments, uniform_grid
from .spectral import SpectralExpansion, expand_solution, recombine
from .state import GridSpec, GridState, phase_aligned_distance


def chunks(n: int, size: int):
    return [(s, min(size, n - s)) for s in range(0, n, size)]


def parallel_map(fn, jobs, workers: int = 1):
    """``[fn(*job) for job in jobs]``, optionally in worker processes (order kept)."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*jobs)))


# ------------------------------------------------------------------ kernel

def kernel_state(psi0: GridState, path: WienerPath, t: float, p: PhysParams,
                 out_grid: GridSpec | None = None) -> GridState:
    """phi_t on a Q path by direct kernel application."""
    d = derive_constants(p)
    return apply_kernel(kernel_coefficients(path, t, d), psi0, out_grid)


def image_centers(psi0: GridState, alpha, abar) -> np.ndarray:
    """Approximate mean position of the kernel image of ``psi0``.

    Precision-weighted blend of the initial mean (precision ``1/dq^2``) and
    the column mean ``Re abar / Re alpha`` (precision ``2 Re alpha``): the
    image sits on the initial state at small t and on the column once the
    collapse has set in.
    """
    w = np.abs(psi0.values) ** 2
    x0 = float((w * psi0.x).sum() / w.sum())
    prec0 = 1.0 / float((w * (psi0.x - x0) ** 2).sum() / w.sum())
    a = np.real(alpha)
    return (prec0 * x0 + 2.0 * np.real(abar)) / (prec0 + 2.0 * a)


def _kernel_norm_chunk(psi0, p, dt, n_steps, checkpoints, seed, start, size, out_n, out_dx):
    d = derive_constants(p)
    dxi = sample_increments(size, n_steps, dt, seed, start)
    t = uniform_grid(n_steps, dt)
    ab, bb, cb = stochastic_series(t, dxi, d)
    out = np.empty((size, len(checkpoints)))
    for j, k in enumerate(checkpoints):
        K, alpha, beta = deterministic_coeffs(t[k], d)
        lk = complex(log_k(t[k], d))
        xc = image_centers(psi0, alpha, ab[:, k])
        for i in range(size):
            kc = KernelCoefficients(K, alpha, beta, ab[i, k], bb[i, k], cb[i, k], float(t[k]), lk)
            grid = GridSpec.centered(out_n, out_dx, center=float(xc[i]))
            out[i, j] = apply_kernel(kc, psi0, grid).norm_sq()
    return out


def kernel_norm_ensemble(psi0: GridState, p: PhysParams, dt: float, n_steps: int, checkpoints, n: int,
                         seed: int, out_n: int | None = None, out_dx: float | None = None,
                         workers: int = 1, chunk: int = 100) -> np.ndarray:
    """||phi_t||^2 at the checkpoint steps for ``n`` Q-trajectories, shape (n, n_checkpoints).

    Each image is sampled on a grid centred by :func:`image_centers`.
    """
    checkpoints = [int(k) for k in checkpoints]
    if min(checkpoints) < 1 or max(checkpoints) > n_steps:
        raise InvalidParameterError("checkpoints must be step indices in [1, n_steps]")
    out_n = out_n or psi0.n
    out_dx = out_dx or psi0.dx
    jobs = [(psi0, p, dt, n_steps, checkpoints, seed, s, m, out_n, out_dx) for s, m in chunks(n, chunk)]
    return np.concatenate(parallel_map(_kernel_norm_chunk, jobs, workers))


# ------------------------------------------------------------------ spectral

def spectral_state(exp: SpectralExpansion, path: WienerPath, t: float, p: PhysParams, grid: GridSpec) -> GridState:
    """phi_t from the eigenstate expansion of phi_0, recombined in the asymptotic frame."""
    d = derive_constants(p)
    if path.measure != "Q":
        raise InvalidParameterError("spectral pathway needs a Q path")
    k = _path_index(path, t)
    xi = path.values[: k + 1]
    b, c, th = boost_series(path.t_grid[: k + 1], xi, p)
    xb, kb, gm = boost_frame(b[-1], c[-1], th[-1], xi[-1], p)
    zb = complex(zeta_bar(t, xb, b[-1], d))
    rc = recombine(exp, zb, d=d)
    a = AsymptoticState(float(xb), float(kb), complex(gm), float(t))
    return expand_solution(rc, a, t, grid, d)


# ------------------------------------------------------------------ Gaussian fast path

def _gaussian_chunk(g0, p, dt, n_steps, measure, seed, start, size, record_every, distance):
    d = derive_constants(p)
    t = uniform_grid(n_steps, dt)
    noise = sample_increments(size, n_steps, dt, seed, start)
    tr = evolve_gaussian_batch(g0, t, noise, p, measure)
    a0 = AsymptoticState(0.0, 0.0, 0j, 0.0)
    if measure == "P":
        fr = evolve_asymptotic_batch(a0, t, noise, p, "P", qexp=tr.xm[:, :-1])
    else:
        fr = evolve_asymptotic_batch(a0, t, noise, p, "Q")
    h = tr.xm - fr.xbar
    spread = 0.5 / np.sqrt(tr.sigma.real)
    lognorm = tr.varsigma.real + 0.25 * np.log(np.pi / (2.0 * tr.sigma.real))
    sel = np.arange(0, n_steps + 1, record_every)
    if measure == "P":
        r = r_from_innovations(t, h, noise, p.lambda_)
        norm = None
    else:
        r = np.exp(lognorm - fr.gamma.real + d.omega * t / 4.0)
        norm = np.exp(lognorm)
    recs = []
    for i in range(size):
        dist = None
        if distance:
            dist = np.empty(len(sel))
            for jj, k in enumerate(sel):
                dist[jj] = gaussian_distance(tr.sigma[k], tr.xm[i, k], tr.km[i, k],
                                             d.sigma_inf, fr.xbar[i, k], fr.kbar[i, k])
        rec = TrajectoryRecord(
            t[sel], seed=seed, index=start + i, qexp=tr.xm[i, sel], spread=spread[sel],
            norm=None if norm is None else norm[i, sel], xbar=fr.xbar[i, sel], kbar=fr.kbar[i, sel],
            h=h[i, sel], r=r[i, sel], distance=dist,
        )
        recs.append(rec)
    return recs


def gaussian_ensemble(g0: GaussianState, p: PhysParams, dt: float, n_steps: int, n: int, seed: int,
                      measure: str = "P", record_every: int = 1, distance: bool = False,
                      workers: int = 1, chunk: int = 500):
    """Gaussian parameters and asymptotic frame for ``n`` trajectories.

    ``distance`` turns on the phase-aligned distance to the asymptotic
    state at the recorded times (closed-form Gaussian overlap).
    """
    jobs = [(g0, p, dt, n_steps, measure, seed, s, m, record_every, distance)
            for s, m in chunks(n, chunk)]
    return [r for part in parallel_map(_gaussian_chunk, jobs, workers) for r in part]


# ------------------------------------------------------------------ grid oracle

def oracle_frames(t, dxi, qexp, p: PhysParams):
    """Frame and diagnostic series along oracle runs (all of shape (m, n+1)).

    ``xbar``, ``kbar`` and ``gamma`` come from the boost system along the
    recovered Q path ``xi``; ``xg`` is the Gaussian-column mean
    ``Re abar / Re alpha``, which has no finite value at t = 0 and is set
    to ``xbar_0`` there.
    """
    d = derive_constants(p)
    xi = np.concatenate((np.zeros(dxi.shape[:-1] + (1,)), np.cumsum(dxi, axis=-1)), axis=-1)
    b, c, th = boost_series(t, xi, p)
    xb, kb, gm = boost_frame(b, c, th, xi, p)
    ab, _, _ = stochastic_series(t, dxi, d)
    _, alpha, _ = deterministic_coeffs(t[1:], d)
    xg = np.empty_like(xb)
    xg[..., 1:], _ = gaussian_frame_arrays(alpha, ab[..., 1:])
    xg[..., 0] = xb[..., 0]
    return {"xbar": xb, "kbar": kb, "gamma": gm, "xg": xg, "b": b, "h": qexp - xb, "f": qexp - xg}


def _oracle_chunk(psi0, p, cfg, n_steps, seed, start, size, record_every, distance, recenter):
    d = derive_constants(p)
    dW = sample_increments(size, n_steps, cfg.dt, seed, start)
    sel = np.arange(0, n_steps + 1, record_every)
    checkpoints = sel if distance else []
    run = run_oracle(psi0, dW, cfg, p, checkpoints=checkpoints, recenter=recenter, record_every=record_every)
    fr = oracle_frames(run.t, run.dxi, run.qexp, p)
    r = r_from_innovations(run.t, fr["h"], dW, p.lambda_)
    recs = []
    for i in range(size):
        dist = None
        if distance:
            dist = np.empty(len(sel))
            for jj, k in enumerate(sel):
                st = run.state(i, k)
                a = AsymptoticState(float(fr["xbar"][i, k]), float(fr["kbar"][i, k]),
                                    complex(fr["gamma"][i, k]), float(run.t[k]))
                dist[jj] = phase_aligned_distance(st, psi_infinity(a, st.grid, d, tol=1e-6))
        recs.append(TrajectoryRecord(
            run.t[sel], seed=seed, index=start + i, qexp=run.qexp[i, sel], spread=run.spread[i],
            xbar=fr["xbar"][i, sel], kbar=fr["kbar"][i, sel], h=fr["h"][i, sel], f=fr["f"][i, sel],
            r=r[i, sel], distance=dist,
        ))
    return recs


def oracle_ensemble(psi0: GridState, p: PhysParams, cfg: IntegratorConfig, n_steps: int, n: int, seed: int,
                    record_every: int = 1, distance: bool = False, recenter: bool = True,
                    workers: int = 1, chunk: int = 50):
    """Physical-measure trajectories of the collapse equation on the grid.

    ``distance`` keeps snapshots at the recorded times (memory grows with
    ``chunk`` times the number of records) and measures the phase-aligned
    distance to the asymptotic state built from the boost frame.
    """
    jobs = [(psi0, p, cfg, n_steps, seed, s, m, record_every, distance, recenter)
            for s, m in chunks(n, chunk)]
    return [r for part in parallel_map(_oracle_chunk, jobs, workers) for r in part]


def final_positions(records) -> np.ndarray:
    return np.array([r.qexp[-1] for r in sorted(records, key=lambda r: r.index)])


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
