import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import affine_gradient_error, quadratic_gradient_errors
from oracles import local_gradient_normal_equations
from sobolev_sysid.data import Dataset
from sobolev_sysid.errors import RankDeficientError
from sobolev_sysid.gradest import (
    GradEstConfig,
    estimate_gradients,
    gradient_error_bound_diagnostic,
    neighbor_set,
    smooth_sequence,
)


def _line(n=3):
    x = np.arange(n, dtype=float)[:, None]
    return Dataset(x, x[:, 0] ** 2)


def test_neighbor_set_examples():
    ds = _line()
    assert neighbor_set(ds, 0, 1.5) == [0, 1]
    assert neighbor_set(ds, 1, 100.0) == [0, 1, 2]
    assert neighbor_set(ds, 2, 1e-12) == [2]


def test_neighbor_set_index_checked():
    with pytest.raises(IndexError):
        neighbor_set(_line(), 3, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        GradEstConfig(radius=-1.0)
    with pytest.raises(ValueError):
        GradEstConfig(min_neighbors=1).resolve_min_neighbors(2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), radius=st.floats(0.3, 3.0))
def test_affine_data_gives_exact_gradients(seed, radius):
    assert affine_gradient_error(seed, radius) <= 1e-9


def test_symmetric_quadratic_has_zero_slope_at_centre():
    h = 0.1
    x = np.array([[-h], [0.0], [h]])
    out = estimate_gradients(Dataset(x, x[:, 0] ** 2), GradEstConfig(radius=1.5 * h))
    assert abs(out.dz[1, 0]) < 1e-14


def test_matches_normal_equations_oracle():
    rng = np.random.default_rng(21)
    x = rng.uniform(-1, 1, (400, 2))
    z = 1.0 + x[:, 0] - 2 * x[:, 1] + 0.8 * x[:, 0] ** 2 - 1.5 * x[:, 0] * x[:, 1] + 0.3 * x[:, 1] ** 2
    ds = Dataset(x, z)
    k = 7
    d = np.linalg.norm(x - x[k], axis=1)
    radius = float(np.mean(np.sort(d)[49:51]))
    idx = neighbor_set(ds, k, radius)
    assert len(idx) == 50
    out = estimate_gradients(ds, GradEstConfig(radius=radius))
    np.testing.assert_allclose(out.dz[k], local_gradient_normal_equations(x, z, k, idx), atol=1e-10)


def test_self_row_does_not_change_gradient():
    rng = np.random.default_rng(22)
    x = rng.uniform(-1, 1, (60, 2))
    z = np.sin(x[:, 0]) * np.cos(x[:, 1])
    ds = Dataset(x, z)
    out = estimate_gradients(ds, GradEstConfig(radius=0.6))
    for k in (0, 13, 42):
        idx = [j for j in neighbor_set(ds, k, 0.6) if j != k]
        np.testing.assert_allclose(out.dz[k], local_gradient_normal_equations(x, z, k, idx), atol=1e-10)


def test_too_few_neighbors():
    x = np.array([[0.0], [10.0]])
    with pytest.raises(RankDeficientError) as info:
        estimate_gradients(Dataset(x, x[:, 0]), GradEstConfig(radius=1.0))
    assert info.value.index == 0


def test_rank_deficient_neighbourhood():
    # collinear points in the plane
    t = np.linspace(0, 1, 10)
    x = np.column_stack([t, 2 * t])
    with pytest.raises(RankDeficientError):
        estimate_gradients(Dataset(x, t), GradEstConfig(radius=5.0))


def test_default_radius_is_fraction_of_diameter():
    x = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert GradEstConfig().resolve_radius(x) == pytest.approx(0.25)


def test_smoothing_examples():
    c = np.full(50, 3.7)
    np.testing.assert_allclose(smooth_sequence(c, 5.0), c, rtol=1e-14)
    v = np.random.default_rng(23).normal(size=30)
    np.testing.assert_array_equal(smooth_sequence(v, 0.0), v)
    alt = np.array([(-1.0) ** k for k in range(101)])
    y = smooth_sequence(alt, 20.0)
    assert np.max(np.abs(y)) < np.max(np.abs(alt))
    assert abs(np.mean(y) - np.mean(alt)) < 1e-12


def test_smoothing_is_zero_phase_in_interior():
    # a symmetric bump stays centred
    n = 201
    v = np.exp(-0.5 * ((np.arange(n) - 100) / 5.0) ** 2)
    y = smooth_sequence(v, 4.0)
    assert int(np.argmax(y)) == 100
    np.testing.assert_allclose(y, y[::-1], atol=1e-12)


def test_smoothing_is_applied_in_estimate_gradients():
    rng = np.random.default_rng(24)
    x = np.linspace(0, 1, 200)[:, None]
    ds = Dataset(x, x[:, 0] + 1e-3 * rng.normal(size=200))
    raw = estimate_gradients(ds, GradEstConfig(radius=0.02))
    smooth = estimate_gradients(ds, GradEstConfig(radius=0.02, smoothing=10.0))
    assert np.std(smooth.dz) < np.std(raw.dz)


def test_diagnostic_examples():
    s = 0.5
    ds = Dataset([[0.0], [s]], [0.0, 1.0])
    cfg = GradEstConfig(radius=1.0)
    assert gradient_error_bound_diagnostic(ds, 0, cfg, 0.0) == 0.0
    assert gradient_error_bound_diagnostic(ds, 0, cfg, 0.1) == pytest.approx(2 * 0.1 / s)
    assert gradient_error_bound_diagnostic(ds, 0, cfg, 0.1, q=math.inf) == pytest.approx(2 * 0.1 / s)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), mu0=st.floats(0, 10))
def test_diagnostic_nonnegative(seed, mu0):
    x = np.random.default_rng(seed).uniform(-1, 1, (30, 2))
    assert gradient_error_bound_diagnostic(Dataset(x, x[:, 0]), 0, GradEstConfig(radius=3.0), mu0) >= 0


def test_diagnostic_bounds_noise_induced_error():
    rng = np.random.default_rng(25)
    x = rng.uniform(-1, 1, (200, 2))
    mu0 = 0.01
    ds = Dataset(x, 2 * x[:, 0] + x[:, 1] + rng.uniform(-mu0, mu0, 200))
    cfg = GradEstConfig(radius=0.5)
    out = estimate_gradients(ds, cfg)
    for k in range(0, 200, 20):
        err = np.max(np.abs(out.dz[k] - [2.0, 1.0]))
        assert err <= gradient_error_bound_diagnostic(ds, k, cfg, mu0, q=math.inf)


def test_error_decreases_along_radius_schedule():
    errors = quadratic_gradient_errors()
    assert errors[0] > errors[1] > errors[2]
