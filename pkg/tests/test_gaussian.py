import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochcollapse.errors import CoverageError, DomainError, InvalidParameterError
from stochcollapse.gaussian import (AsymptoticState, GaussianState, evolve_asymptotic, evolve_asymptotic_batch,
                                    evolve_gaussian, evolve_gaussian_batch, gamma_from_varsigma, gaussian_distance,
                                    kappa_from_sigma, psi_infinity, sigma_advance, sigma_closed_form, sigma_rhs,
                                    sigma_series, spreads, varsigma_from_gamma)
from stochcollapse.kernel import apply_kernel, boost_frame, boost_series, kernel_coefficients
from stochcollapse.params import PhysParams, derive_constants
from stochcollapse.paths import WienerPath, sample_increments, sample_path, uniform_grid
from stochcollapse.state import GridSpec, phase_aligned_distance

P = PhysParams()
D = derive_constants(P)
pos = st.floats(0.2, 5.0)


def test_sigma_fixed_point():
    assert abs(sigma_rhs(D.z2 / 2, P)) < 1e-14
    s = sigma_series(D.sigma_inf, uniform_grid(100, 0.05), D)
    assert np.max(np.abs(s - D.sigma_inf)) < 1e-14
    with pytest.raises(DomainError):
        kappa_from_sigma(D.sigma_inf, D)


@given(sr=st.floats(0.01, 20), si=st.floats(-5, 5))
@settings(max_examples=40, deadline=None)
def test_sigma_relaxes_to_fixed_point(sr, si):
    s = sigma_series(complex(sr, si), uniform_grid(200, 0.05), D)
    assert np.all(s.real > 0)
    assert abs(sigma_advance(s[-1], 10.0 - 0.05 * 200, D) - D.sigma_inf) < 1e-6


def _rk4_sigma(s0, t_end, h):
    s = complex(s0)
    out = [s]
    for _ in range(int(round(t_end / h))):
        k1 = sigma_rhs(s, P)
        k2 = sigma_rhs(s + 0.5 * h * k1, P)
        k3 = sigma_rhs(s + 0.5 * h * k2, P)
        k4 = sigma_rhs(s + h * k3, P)
        s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(s)
    return np.array(out)


@pytest.mark.parametrize("s0", [0.0025 + 0j, 2.0 - 1.0j, 0.3 + 0.8j])
def test_sigma_closed_form_against_rk4(s0):
    h = 1e-4
    t_end = 10 / D.omega
    ref = _rk4_sigma(s0, t_end, h)
    t = h * np.arange(len(ref))
    cf = sigma_closed_form(t, kappa_from_sigma(s0, D), D)
    assert np.max(np.abs(cf - ref)) < 1e-8
    assert np.max(np.abs(sigma_series(s0, t[::100], D) - ref[::100])) < 1e-8


def test_zero_path_keeps_centre():
    zero = WienerPath(uniform_grid(300, 0.01), np.zeros(300))
    tr = evolve_gaussian(GaussianState(0.3 + 0.1j), zero, P)
    assert np.all(tr.xm == 0) and np.all(tr.km == 0)


def test_varsigma_drift_at_fixed_point():
    zero = WienerPath(uniform_grid(10, 0.01), np.zeros(10))
    tr = evolve_gaussian(GaussianState(D.sigma_inf), zero, P)
    rate = (tr.varsigma[1].real - tr.varsigma[0].real) / 0.01
    s = D.sigma_inf
    assert abs(rate - (P.hbar * s.imag / P.mass + P.lambda_ / (4 * s.real))) < 1e-8


def test_zero_path_asymptotic_frame():
    t = uniform_grid(400, 0.01)
    tr = evolve_asymptotic(AsymptoticState(), WienerPath(t, np.zeros(400)), None, P)
    assert np.all(tr.xbar == 0) and np.all(tr.kbar == 0)
    assert np.allclose(tr.gamma.real, D.omega * t / 4, atol=1e-12)
    assert np.allclose(tr.gamma.imag, -D.omega * t / 4, atol=1e-12)


@given(lam=pos, hbar=pos, m=pos, seed=st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_gamma_varsigma_offset(lam, hbar, m, seed):
    """Started on the fixed point, the Gaussian and frame systems differ by (1 + i) omega t/4."""
    p = PhysParams(hbar, m, lam)
    d = derive_constants(p)
    dt = 0.02 / d.omega
    path = sample_path(200, dt, seed)
    g = evolve_gaussian(GaussianState(d.sigma_inf), path, p)
    a = evolve_asymptotic(AsymptoticState(), path, None, p)
    scale = 1 + np.max(np.abs(a.gamma))
    assert np.max(np.abs(gamma_from_varsigma(g.varsigma, g.t, d) - a.gamma)) < 1e-10 * scale
    assert np.max(np.abs(g.xm - a.xbar)) < 1e-10 * (1 + np.max(np.abs(a.xbar)))
    assert np.allclose(varsigma_from_gamma(a.gamma, a.t, d), g.varsigma, atol=1e-10 * scale)


def test_q_and_p_forms_agree_on_girsanov_related_paths():
    t = uniform_grid(1000, 2e-3)
    dW = sample_increments(3, 1000, 2e-3, seed=4)
    g = evolve_gaussian_batch(GaussianState(0.1 + 0.05j, 0.4, -0.3), t, dW, P, measure="P")
    fp = evolve_asymptotic_batch(AsymptoticState(), t, dW, P, "P", qexp=g.xm[:, :-1])
    fq = evolve_asymptotic_batch(AsymptoticState(), t, g.dxi, P, "Q")
    assert np.max(np.abs(fp.xbar - fq.xbar)) < 1e-10
    assert np.max(np.abs(fp.gamma - fq.gamma)) < 1e-9
    gq = evolve_gaussian_batch(GaussianState(0.1 + 0.05j, 0.4, -0.3), t, g.dxi, P, measure="Q")
    assert np.max(np.abs(gq.xm - g.xm)) < 1e-10


def test_p_form_requires_expectation_series():
    with pytest.raises(InvalidParameterError):
        evolve_asymptotic(AsymptoticState(), sample_path(10, 0.1, 1, measure="P"), None, P)


def test_p_form_momentum_variance_with_vanishing_h():
    n, dt = 10_000, 2e-3
    k = int(round(5 / D.omega / dt))
    t = uniform_grid(k, dt)
    dW = sample_increments(n, k, dt, seed=31)
    g = evolve_gaussian_batch(GaussianState(D.sigma_inf), t, dW, P, measure="P")
    fr = evolve_asymptotic_batch(AsymptoticState(), t, dW, P, "P", qexp=g.xm[:, :-1])
    assert np.max(np.abs(g.xm - fr.xbar)) < 1e-10
    assert fr.kbar[:, -1].var(ddof=1) == pytest.approx(P.lambda_ * t[-1], rel=0.05)


def test_psi_infinity_shape():
    grid = GridSpec.centered(2048, 0.02)
    st_ = psi_infinity(AsymptoticState(1.3, -0.7, 0.2 + 0.4j, 2.0), grid, D)
    assert st_.norm() == pytest.approx(1.0, abs=1e-10)
    dq, dp, mq, mp_ = spreads(st_, P.hbar)
    assert dq == pytest.approx(math.sqrt(P.hbar / (P.mass * D.omega)), rel=1e-10)
    assert dp == pytest.approx(math.sqrt(P.hbar * P.mass * D.omega / 2), rel=1e-8)
    assert dq * dp == pytest.approx(P.hbar / math.sqrt(2), rel=1e-8)
    assert mq == pytest.approx(1.3, abs=1e-10) and mp_ == pytest.approx(-0.7, abs=1e-8)
    with pytest.raises(CoverageError):
        psi_infinity(AsymptoticState(19.0), grid, D)


@given(s1=st.tuples(st.floats(0.05, 3), st.floats(-2, 2)), s2=st.tuples(st.floats(0.05, 3), st.floats(-2, 2)),
       x1=st.floats(-2, 2), x2=st.floats(-2, 2), k1=st.floats(-2, 2), k2=st.floats(-2, 2))
@settings(max_examples=40, deadline=None)
def test_closed_form_distance_matches_grid(s1, s2, x1, x2, k1, k2):
    grid = GridSpec.centered(4096, 0.01)
    a = GaussianState(complex(*s1), x1, k1).on_grid(grid)
    b = GaussianState(complex(*s2), x2, k2).on_grid(grid)
    cf = gaussian_distance(complex(*s1), x1, k1, complex(*s2), x2, k2)
    assert cf == pytest.approx(phase_aligned_distance(a, b), abs=1e-7)


def test_gaussian_fast_path_matches_kernel():
    dt, t_end = 1e-4, 1 / D.omega
    n = int(round(t_end / dt))
    grid = GridSpec.centered(1024, 0.02)
    g0 = GaussianState.normalized(0.4 + 0.1j, 0.2, 0.3)
    for seed in (1, 2):
        path = sample_path(n, dt, seed)
        g = evolve_gaussian(g0, path, P).state()
        kern = apply_kernel(kernel_coefficients(path, path.t_end, D), g0.on_grid(grid))
        gg = g.on_grid(grid)
        assert phase_aligned_distance(kern, gg) < 1e-4
        # the Euler-Maruyama norm carries an O(dt) error
        assert abs(kern.log_norm() - gg.log_norm()) < 1e-2


def test_boost_frame_matches_frame_sde():
    errs = []
    for dt in (4e-3, 1e-3):
        path = sample_path(int(round(2 / dt)), dt, 8)
        b, c, th = boost_series(path.t_grid, path.values, P)
        xb, kb, _ = boost_frame(b, c, th, path.values, P)
        fr = evolve_asymptotic(AsymptoticState(), path, None, P)
        errs.append(max(np.max(np.abs(xb - fr.xbar)), np.max(np.abs(kb - fr.kbar))))
    assert errs[0] < 0.05 and errs[1] < errs[0] / 2
