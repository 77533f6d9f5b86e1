import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from stochcollapse.ensemble import spectral_state
from stochcollapse.errors import CoverageError, EstimationError, InvalidParameterError, ValidityError
from stochcollapse.gaussian import AsymptoticState, GaussianState, psi_infinity
from stochcollapse.kernel import apply_kernel, boost_frame, boost_series, kernel_coefficients, nsa_coefficients
from stochcollapse.params import PhysParams, derive_constants
from stochcollapse.paths import WienerPath, sample_path, uniform_grid
from stochcollapse.spectral import (SpectralExpansion, biorthonormality_matrix, eigenstate, eigenstate_matrix,
                                    eigenvalue, eigenvalue_residual, expand_solution, expansion, hermite_addition_rhs,
                                    hermite_complex, project, project_all, projector_norm_values, projector_norms,
                                    r_norm, recombine, reconstruct, t_bar)
from stochcollapse.state import GridSpec, GridState, phase_aligned_distance

P = PhysParams()
D = derive_constants(P)
GRID = GridSpec.centered(2048, 0.02)
C = projector_norms(40, D).c
cplx = st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False)


def test_hermite_base_cases():
    assert hermite_complex(0, 1 + 2j) == 1
    assert hermite_complex(1, 1 + 2j) == 2 + 4j
    assert hermite_complex(2, 1 + 1j) == pytest.approx(-2 + 8j, abs=1e-15)
    with pytest.raises(InvalidParameterError):
        hermite_complex(-1, 0.5)


@pytest.mark.parametrize("n", [3, 10, 25, 40])
def test_hermite_against_mpmath(n):
    z = 0.7 - 1.3j
    ref = complex(mp.hermite(n, mp.mpc(z.real, z.imag)))
    assert abs(hermite_complex(n, z) - ref) < 1e-12 * abs(ref)
    norm = math.sqrt(math.sqrt(math.pi) * 2.0**n * math.factorial(n))
    assert abs(hermite_complex(n, z, normalized=True) - ref / norm) < 1e-12 * abs(ref / norm)


def test_hermite_log_scaled_high_order():
    z = 1.1 + 0.4j
    mant, lf = hermite_complex(300, z, log_scaled=True)
    ref = mp.hermite(300, mp.mpc(z.real, z.imag))
    assert abs(complex(mant * mp.exp(lf) / ref) - 1) < 1e-10


def test_addition_rule_example():
    assert abs(hermite_complex(2, 0.3j + 1.1) - hermite_addition_rhs(2, 0.3j, 1.1)) < 1e-12


@given(z1=cplx, z2=cplx, n=st.integers(0, 12))
@settings(max_examples=60, deadline=None)
def test_addition_rule_random(z1, z2, n):
    lhs = hermite_complex(n, z1 + z2)
    rhs = hermite_addition_rhs(n, z1, z2)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), sum(
        abs(math.comb(n, k) * (2 * z2) ** (n - k) * hermite_complex(k, z1)) for k in range(n + 1)))


def test_eigenstate_pairing_and_norm():
    p0 = eigenstate(0, GRID, D)
    p2 = eigenstate(2, GRID, D)
    assert abs(np.sum(p0.values**2) * GRID.dx - 1) < 1e-10
    assert abs(np.sum(p0.values * p2.values) * GRID.dx) < 1e-8
    # conjugated norm of the ground state: |z| / sqrt(Re z^2) > 1
    ref = abs(D.z) / math.sqrt(D.z2.real)
    assert p0.norm_sq() == pytest.approx(ref, rel=1e-10)
    assert p0.norm_sq() > 1


def test_eigenstate_coverage():
    with pytest.raises(CoverageError):
        eigenstate(40, GridSpec.centered(200, 0.02), D)


def test_biorthonormality():
    m = biorthonormality_matrix(30, GRID, D)
    assert float(np.max(np.abs(m - np.eye(31)))) < 1e-8


@pytest.mark.parametrize("n", range(0, 11))
def test_eigenvalue_residual(n):
    assert eigenvalue_residual(n, GridSpec.centered(4096, 0.005), D) < 1e-4
    assert eigenvalue(n, D) == pytest.approx((1 - 1j) * D.omega * (n + 0.5) / 2)


def test_projection_examples():
    a = project_all(eigenstate(3, GRID, D), 10, D)
    assert np.max(np.abs(a - np.eye(11)[3])) < 1e-8
    mix = eigenstate(0, GRID, D).with_values((eigenstate(0, GRID, D).values + eigenstate(1, GRID, D).values) / 1.7)
    a = project_all(mix, 4, D)
    assert a[0] == pytest.approx(a[1], abs=1e-10) and abs(a[0]) > 0.5
    scaled = mix.with_values(mix.values, log_scale=0.3 + 0.2j)
    assert project(scaled, 1, D) == pytest.approx(a[1] * np.exp(0.3 + 0.2j), rel=1e-12)


def test_reconstruction_converges():
    phi = GaussianState(0.6 - 0.4j).on_grid(GRID)
    a = project_all(phi, 24, D)
    errs = [np.linalg.norm(reconstruct(a[: n + 1], GRID, D).values - phi.values) / np.linalg.norm(phi.values)
            for n in range(0, 25, 4)]
    assert all(e1 <= e0 / 2 for e0, e1 in zip(errs, errs[1:]))
    assert errs[-1] < 1e-7


def test_projector_norms():
    pn = projector_norms(40, D)
    assert np.all(np.diff(pn.norms[1:]) > 0)
    lr = pn.log_ratio
    assert abs(lr[39] / lr[29] - 1) < 0.05
    assert pn.c > 0
    assert t_bar(pn.c, D) == pytest.approx((4 * pn.c + 1) / D.omega)
    with pytest.raises(EstimationError):
        projector_norms(5, D)


def test_projector_norms_independent_of_scale():
    """||phi_n||^2 on a grid for a different coupling equals the scale-free values."""
    d = derive_constants(PhysParams(lambda_=3.0))
    vals = projector_norm_values(12)
    grid = GridSpec.centered(4096, 0.005)
    direct = [eigenstate(n, grid, d).norm_sq() for n in range(13)]
    assert np.allclose(direct, vals, rtol=1e-8)


def test_recombine_examples():
    a = np.array([0.3, -0.2j, 0.1, 0.05])
    exp = SpectralExpansion(a, 3, t_bar(C, D), C)
    assert np.array_equal(recombine(exp, 0j, d=D).alpha_bars, a)
    single = SpectralExpansion(np.array([0, 1, 0, 0], dtype=complex), 3, t_bar(C, D), C)
    rc = recombine(single, 0.1, d=D)
    assert rc.alpha_bars[0] == pytest.approx(math.sqrt(2) * D.z * 0.1, abs=1e-15)


@given(zb=st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False), seed=st.integers(0, 100))
@settings(max_examples=30, deadline=None)
@example(zb=0j, seed=15)  # envelope attained at n = 0: the k = 0 terms set the constant
def test_recombined_bound(zb, seed):
    rng = np.random.default_rng(seed)
    n = np.arange(41)
    a = (rng.normal(size=41) + 1j * rng.normal(size=41)) * np.exp(C * n) * rng.uniform(0, 1, 41)
    rc = recombine(SpectralExpansion(a, 40, t_bar(C, D), C), zb, d=D)
    m = np.arange(len(rc.alpha_bars))
    assert np.all(np.abs(rc.alpha_bars) <= rc.N_t_bound * np.exp((C + 0.5) * m) * (1 + 1e-12))


def test_expand_ground_state_zero_path():
    tb = t_bar(C, D)
    t = 2 * tb
    phi = eigenstate(0, GRID, D)
    exp = expansion(phi, D, n_max=40, c=C)
    zero = WienerPath(uniform_grid(int(round(t / 1e-3)), t / int(round(t / 1e-3))), np.zeros(int(round(t / 1e-3))))
    spec = spectral_state(exp, zero, zero.t_end, P, GRID)
    kern = apply_kernel(nsa_coefficients(zero.t_end, D), phi)
    assert phase_aligned_distance(spec, kern) < 1e-6
    assert spec.log_norm() == pytest.approx(kern.log_norm(), abs=1e-8)


def test_expand_solution_validity_gate():
    tb = t_bar(C, D)
    exp = expansion(eigenstate(0, GRID, D), D, n_max=10, c=C)
    rc = recombine(exp, 0j, d=D)
    for t in (0.5 * tb, tb):
        with pytest.raises(ValidityError):
            expand_solution(rc, AsymptoticState(t=t), t, GRID, D)


def _frame(path, k):
    b, c, th = boost_series(path.t_grid[: k + 1], path.values[: k + 1], P)
    xb, kb, gm = boost_frame(b[-1], c[-1], th[-1], path.values[k], P)
    return AsymptoticState(float(xb), float(kb), complex(gm), float(path.t_grid[k])), b[-1]


def test_expand_generic_superposition_and_convergence():
    tb = t_bar(C, D)
    dt = 1e-3
    t1 = 2 * tb
    t2 = t1 + 10 / D.omega
    path = sample_path(int(round(t2 / dt)), dt, 13)
    k1 = int(round(t1 / dt))
    phi = eigenstate(0, GRID, D).with_values(eigenstate(0, GRID, D).values + eigenstate(4, GRID, D).values)
    exp = expansion(phi, D, n_max=40, c=C)
    s1 = spectral_state(exp, path, path.t_grid[k1], P, GRID)
    kern = apply_kernel(kernel_coefficients(path, path.t_grid[k1], D), phi)
    assert phase_aligned_distance(s1, kern) < 1e-4
    s2 = spectral_state(exp, path, path.t_end, P, GRID)
    a1, _ = _frame(path, k1)
    a2, _ = _frame(path, path.n_steps)
    d1 = phase_aligned_distance(s1, psi_infinity(a1, GRID, D))
    d2 = phase_aligned_distance(s2, psi_infinity(a2, GRID, D))
    assert d2 < d1 / (math.exp(0.5 * D.omega * 10 / D.omega) / 2)


def test_r_diagnostic_has_a_limit():
    tb = t_bar(C, D)
    dt = 2e-3
    t1 = 3 * tb
    t2 = t1 + 10 / D.omega
    path = sample_path(int(round(t2 / dt)), dt, 3)
    phi = GaussianState(0.3 - 0.1j, 0.4, 0.2).on_grid(GRID)
    exp = expansion(phi, D, n_max=40, c=C)
    r = []
    for k in (int(round(t1 / dt)), path.n_steps):
        a, b = _frame(path, k)
        zb = np.exp(-D.upsilon * a.t) * (a.xbar - b)
        rc = recombine(exp, complex(zb), d=D)
        r.append(r_norm(rc, a, a.t, GRID, D))
    assert r[0] > 0 and abs(r[1] - r[0]) < 0.01 * r[0]
