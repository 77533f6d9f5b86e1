import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochcollapse.errors import AlignmentError, CoverageError, NumericError
from stochcollapse.state import (GridSpec, GridState, compare_states, inner, phase_aligned_distance,
                                 read_state_csv, resample, write_state_csv)

G = GridSpec.centered(512, 0.05)


def bump(x0=0.0, k0=0.0, s=1.0, grid=G):
    return GridState.from_function(grid, lambda x: np.exp(-((x - x0) ** 2) / (4 * s**2) + 1j * k0 * x))


def test_distance_trivial_cases():
    a = bump()
    assert phase_aligned_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    b = a.with_values(a.values * np.exp(1j * np.pi / 3))
    assert phase_aligned_distance(a, b) == pytest.approx(0.0, abs=1e-12)
    odd = GridState.from_function(G, lambda x: x * np.exp(-x**2 / 4))
    assert phase_aligned_distance(a, odd) == pytest.approx(math.sqrt(2), abs=1e-12)


@given(th=st.floats(-10, 10), scale=st.floats(1e-3, 1e3), x0=st.floats(-3, 3), k0=st.floats(-2, 2))
@settings(max_examples=40, deadline=None)
def test_distance_invariant_under_scale_and_phase(th, scale, x0, k0):
    a = bump(0.3, 0.5)
    b = bump(x0, k0)
    d1 = phase_aligned_distance(a, b)
    d2 = phase_aligned_distance(a, b.with_values(b.values * scale * np.exp(1j * th)))
    assert d2 == pytest.approx(d1, abs=1e-12)
    assert 0.0 <= d1 <= math.sqrt(2) + 1e-12


def test_norm_in_log_space():
    a = bump()
    big = a.with_values(a.values, log_scale=800.0)
    assert big.log_norm() == pytest.approx(a.log_norm() + 800.0, abs=1e-12)
    assert big.normalized().norm() == pytest.approx(1.0, abs=1e-12)
    assert big.rescaled().log_norm() == pytest.approx(big.log_norm(), abs=1e-12)
    with pytest.raises(NumericError):
        a.with_values(np.zeros(G.n)).normalized()


def test_inner_product_includes_scales():
    a = bump().normalized()
    b = a.with_values(a.values, log_scale=1j * 0.7 + 2.0)
    assert inner(a, b) == pytest.approx(np.exp(2.0 + 0.7j), rel=1e-12)


def test_grid_checks():
    with pytest.raises(AlignmentError):
        GridState(G, np.zeros(G.n + 1))
    with pytest.raises(AlignmentError):
        phase_aligned_distance(bump(), bump(grid=G.shifted(3)))
    with pytest.raises(CoverageError):
        bump(s=8.0).check_coverage()
    bump().check_coverage()


def test_csv_round_trip(tmp_path):
    a = bump(0.4, 1.2).with_values(bump(0.4, 1.2).values, log_scale=3.5 - 0.25j, t=1.25)
    write_state_csv(a, tmp_path / "a.csv", config_hash="abc", seed=9)
    b = read_state_csv(tmp_path / "a.csv")
    assert b.t == 1.25 and b.log_scale == a.log_scale
    assert b.meta["config_hash"] == "abc" and b.meta["seed"] == "9"
    assert np.array_equal(b.values, a.values)
    assert b.grid.same_as(a.grid)


def test_compare_states_resamples_overlapping_grids():
    a = bump()
    b = resample(bump(), GridSpec.centered(400, 0.06))
    with pytest.warns(UserWarning):
        rep = compare_states(a, b)
    assert rep["resampled"] and rep["distance"] < 2e-3
    far = bump(grid=GridSpec(100.0, 0.05, 64))
    with pytest.raises(AlignmentError):
        compare_states(a, far)
