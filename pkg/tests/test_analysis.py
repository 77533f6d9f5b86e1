import math
import warnings

import numpy as np
import pytest

from stochcollapse.analysis import (TrajectoryRecord, born_rule_stats, collapse_time, decay_fit,
                                    deterministic_collapse_estimate, diffusion_stats, ensemble_stats,
                                    exact_xbar_variance, gaussian_frame, r_from_innovations, r_from_norm,
                                    recrossings, reweighted_mean)
from stochcollapse.ensemble import gaussian_ensemble, kernel_norm_ensemble, oracle_ensemble
from stochcollapse.errors import DomainError, EstimationError, InvalidParameterError
from stochcollapse.gaussian import AsymptoticState, GaussianState, evolve_asymptotic, evolve_gaussian
from stochcollapse.kernel import apply_kernel, kernel_coefficients
from stochcollapse.oracle import IntegratorConfig, observables
from stochcollapse.params import PhysParams, derive_constants
from stochcollapse.paths import girsanov_unshift, sample_path
from stochcollapse.state import GridSpec, GridState

P = PhysParams()
D = derive_constants(P)


def record(spread, dt=0.1):
    spread = np.asarray(spread, dtype=float)
    return TrajectoryRecord(dt * np.arange(len(spread)), spread=spread, qexp=np.zeros(len(spread)))


# ------------------------------------------------------------------ collapse

def test_collapse_time_basic():
    assert collapse_time(record([0.8, 0.75, 0.72]), 0.85) == 0.0
    assert collapse_time(record([3.0, 2.0, 1.0, 0.8]), 0.9) == pytest.approx(0.3)
    assert collapse_time(record([3.0, 2.0, 1.5]), 0.9) is None


def test_collapse_time_monotone_in_threshold():
    rec = record(0.71 + 5 * np.exp(-np.linspace(0, 10, 200)))
    ts = [collapse_time(rec, ell) for ell in (3.0, 1.5, 1.0, 0.8)]
    assert all(a <= b for a, b in zip(ts, ts[1:]))


def test_collapse_time_rejects_unreachable_threshold():
    with pytest.raises(InvalidParameterError):
        collapse_time(record([1.0, 0.9]), D.asymptotic_spread_q)
    with pytest.raises(InvalidParameterError):
        collapse_time(TrajectoryRecord(np.arange(3.0)), 1.0)


def test_deterministic_estimate():
    for ell in (0.8, 1.0, 2.0, 5.0):
        t = deterministic_collapse_estimate(ell)
        a = (2 * D.lambda_ / D.upsilon * np.tanh(D.upsilon * t)).real
        assert 1 / math.sqrt(2 * a) == pytest.approx(ell, rel=1e-10)
    assert deterministic_collapse_estimate(1.0) < deterministic_collapse_estimate(0.8)
    with pytest.raises(InvalidParameterError):
        deterministic_collapse_estimate(0.5)


def test_deterministic_estimate_matches_broad_gaussian():
    ell = 1.2
    grid = GridSpec.centered(1024, 0.05)
    g0 = GaussianState.normalized(1 / (4 * 200.0**2))
    path = sample_path(4000, 1e-3, 0).__class__(np.arange(4001) * 1e-3, np.zeros(4000))
    tr = evolve_gaussian(g0, path, P)
    spread = 0.5 / np.sqrt(tr.sigma.real)
    t_hit = tr.t[np.argmax(spread <= ell)]
    assert t_hit == pytest.approx(deterministic_collapse_estimate(ell), abs=2e-3)
    assert grid.n == 1024


# ------------------------------------------------------------------ fits

def test_decay_fit_exact():
    t = np.linspace(0, 5, 50)
    fit = decay_fit(t, 3 * np.exp(-t))
    assert fit.rate == pytest.approx(-1, abs=1e-6)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-6)
    assert fit.r_squared == pytest.approx(1, abs=1e-12)
    assert decay_fit(t, np.exp(-t), t_min=2).n == np.count_nonzero(t >= 2)


def test_decay_fit_needs_points():
    with pytest.raises(EstimationError):
        decay_fit(np.arange(9.0), np.exp(-np.arange(9.0)))
    with pytest.raises(EstimationError):
        decay_fit(np.arange(20.0), np.zeros(20))


# ------------------------------------------------------------------ Born rule

def bumps(grid, centers, weights, s=0.7071):
    v = sum(math.sqrt(w) * np.exp(-((grid.x - c) ** 2) / (4 * s * s)) for c, w in zip(centers, weights))
    return GridState(grid, v).normalized()


def test_born_single_bump():
    grid = GridSpec.centered(1024, 0.03)
    psi = bumps(grid, [7.0], [1.0])
    rep = born_rule_stats(np.full(50, 7.0), [(-15, 0), (0, 15)], psi, P, 0.5)
    assert rep.reference_weights[1] == pytest.approx(1, abs=1e-12)
    assert list(rep.frequencies) == [0.0, 1.0]
    assert rep.smeared_weights.sum() == pytest.approx(1, abs=1e-3)


def test_born_symmetric():
    grid = GridSpec.centered(1024, 0.03)
    psi = bumps(grid, [-5.0, 5.0], [0.5, 0.5])
    rep = born_rule_stats([-5, -4, 4, 5], [(-15, 0), (0, 15)], psi, P, 0.5)
    assert rep.reference_weights[0] == pytest.approx(rep.reference_weights[1], abs=1e-12)
    assert np.allclose(rep.frequencies, 0.5)
    assert np.allclose(rep.z_scores, 0.0)


def test_born_region_errors():
    grid = GridSpec.centered(256, 0.1)
    psi = bumps(grid, [0.0], [1.0])
    with pytest.raises(InvalidParameterError):
        born_rule_stats([0.0], [(-10, 1), (0, 10)], psi, P, 0.5)
    with pytest.raises(InvalidParameterError):
        born_rule_stats([0.0], [(1, 1)], psi, P, 0.5)
    with pytest.warns(UserWarning):
        born_rule_stats([0.0], [(-1, 1)], psi, P, 0.5)
    with pytest.raises(EstimationError):
        born_rule_stats([], [(-10, 10)], psi, P, 0.5)


# ------------------------------------------------------------------ diffusion and frames

def test_exact_xbar_variance_small_time():
    t = 1e-4
    assert exact_xbar_variance(t) == pytest.approx(P.hbar / P.mass * t, rel=1e-3)


def test_diffusion_stats_on_asymptotic_ensemble():
    a0 = AsymptoticState()
    dt, n = 1e-2, 300
    t = np.arange(n + 1) * dt
    rng = np.random.default_rng(3)
    noise = rng.normal(0, math.sqrt(dt), (400, n))
    from stochcollapse.gaussian import evolve_asymptotic_batch
    fr = evolve_asymptotic_batch(a0, t, noise, P, "P", qexp=np.zeros((400, n)) + 0.0)
    # with <q> = xbar the innovation is dW itself
    fr = evolve_asymptotic_batch(a0, t, noise, P, "Q")
    rep = diffusion_stats(t, fr.xbar, fr.kbar, P)
    assert np.all(np.abs(rep.mean_x[1:]) < 4 * rep.mean_x_se[1:])
    assert rep.n == 400
    with pytest.warns(UserWarning):
        diffusion_stats(t, fr.xbar[:50], fr.kbar[:50], P)
    with pytest.raises(EstimationError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        diffusion_stats(t, fr.xbar[:1], fr.kbar[:1], P)


def test_gaussian_frame_zero_path_and_kernel_column():
    path = sample_path(2000, 5e-4, 0).__class__(np.arange(2001) * 5e-4, np.zeros(2000))
    xg, kg = gaussian_frame(kernel_coefficients(path, 1.0, D))
    assert abs(xg) < 1e-14 and abs(kg) < 1e-14
    path = sample_path(2000, 5e-4, 4)
    kc = kernel_coefficients(path, 1.0, D)
    xg, _ = gaussian_frame(kc)
    # column G_t(., 0): the image of a narrow delta-like input at 0
    grid = GridSpec.centered(4096, 0.01, center=float(xg))
    col = np.exp(-kc.alpha * grid.x**2 / 2 + kc.abar * grid.x)
    assert observables(GridState(grid, col)).qexp == pytest.approx(float(xg), abs=1e-8)
    with pytest.raises(DomainError):
        gaussian_frame(kernel_coefficients(path, 0.0, D))


def test_r_from_innovations_matches_norm_formula():
    dt = 1e-4
    xi = sample_path(10000, dt, 9)
    g0 = GaussianState.normalized(D.sigma_inf, 0.4, -0.3)
    tr = evolve_gaussian(g0, xi, P)
    fr = evolve_asymptotic(AsymptoticState(), xi, None, P)
    lognorm = tr.varsigma.real + 0.25 * np.log(np.pi / (2 * tr.sigma.real))
    r_norm = r_from_norm(tr.t, np.exp(lognorm), fr.gamma.real, D.omega)
    w = girsanov_unshift(xi, tr.xm, P.lambda_)
    r_inn = r_from_innovations(tr.t, tr.xm - fr.xbar, w.increments, P.lambda_)
    assert np.max(np.abs(r_inn / r_norm - 1)) < 1e-3


# ------------------------------------------------------------------ ensembles

def test_reweighting_q_to_p():
    """Q-runs weighted by ||phi_t||^2 reproduce P-means: unit norm and a conserved <q>."""
    grid = GridSpec.centered(512, 0.04)
    psi = bumps(grid, [-2.0, 2.0], [0.25, 0.75])
    q0 = observables(psi).qexp
    n, t = 400, 0.25
    norm_sq, qexp = np.empty(n), np.empty(n)
    for i in range(n):
        st = apply_kernel(kernel_coefficients(sample_path(100, t / 100, 21, i), t, D), psi, grid)
        ob = observables(st)
        norm_sq[i], qexp[i] = st.norm_sq(), ob.qexp
    m, se = reweighted_mean(np.ones(n), norm_sq)
    assert abs(m - 1) < 4 * se
    mq, seq = reweighted_mean(qexp, norm_sq)
    assert abs(mq - q0) < 4 * seq


def test_kernel_norm_ensemble_grid_placement():
    """Compact output grids capture the whole image at early and late checkpoints."""
    grid = GridSpec.centered(2048, 0.01)
    psi = GridState.from_function(grid, lambda x: np.exp(-0.8 * (x - 1.5) ** 2) * (1 + 0.4j * x)).normalized()
    dt, n = 1e-3, 2000
    cps = [100, 500, 2000]
    compact = kernel_norm_ensemble(psi, P, dt, n, cps, 6, 4, out_n=160, out_dx=0.06)
    wide = kernel_norm_ensemble(psi, P, dt, n, cps, 6, 4, out_n=4096, out_dx=0.03)
    assert np.max(np.abs(compact / wide - 1)) < 1e-4
    with pytest.raises(InvalidParameterError):
        kernel_norm_ensemble(psi, P, dt, n, [0], 2, 4)


def test_seed_reproducibility_across_chunks():
    g0 = GaussianState.normalized(0.3, 0.2, 0.1)
    a = gaussian_ensemble(g0, P, 1e-2, 50, 7, 5, measure="P", chunk=3)
    b = gaussian_ensemble(g0, P, 1e-2, 50, 7, 5, measure="P", chunk=7)
    assert all(np.array_equal(x.qexp, y.qexp) and x.index == y.index for x, y in zip(a, b))
    grid = GridSpec.centered(256, 0.05)
    psi = g0.on_grid(grid).normalized()
    cfg = IntegratorConfig(1e-2, grid)
    oa = oracle_ensemble(psi, P, cfg, 30, 4, 11, chunk=1)
    ob = oracle_ensemble(psi, P, cfg, 30, 4, 11, chunk=4)
    assert all(np.allclose(x.qexp, y.qexp, atol=1e-12) for x, y in zip(oa, ob))


def test_ensemble_stats_and_collapse():
    recs = [TrajectoryRecord(np.arange(5.0), index=i, spread=np.array([2, 1.5, 1.0, 0.8, 0.75]) + 0.1 * i,
                             qexp=np.full(5, float(i))) for i in range(4)]
    st = ensemble_stats(recs[::-1], ell=1.1)
    assert st.n == 4
    assert np.allclose(st.mean["qexp"], 1.5)
    assert np.isfinite(st.collapse_times).all()
    assert "median" in st.collapse_positions
    with pytest.raises(EstimationError):
        ensemble_stats([])


def test_record_validation():
    with pytest.raises(InvalidParameterError):
        TrajectoryRecord(np.arange(3.0), qexp=np.arange(4.0))
    with pytest.raises(InvalidParameterError):
        TrajectoryRecord(np.arange(3.0), qexp=np.array([0, np.nan, 1]))


def test_record_csv(tmp_path):
    rec = TrajectoryRecord(np.arange(3.0), seed=4, index=2, qexp=np.array([0.1, 0.2, 0.3]))
    rec.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "# seed=4 index=2" and lines[1] == "t,qexp"


def test_recrossings():
    q = np.array([[1, -1, 1, 2], [1, 1, 1, 1]], dtype=float)
    assert list(recrossings(q, 0.0)) == [2, 0]
