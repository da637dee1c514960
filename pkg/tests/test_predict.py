import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sobolev_sysid.basis import monomial_basis
from sobolev_sysid.errors import DimensionError
from sobolev_sysid.identify import Model
from sobolev_sysid.predict import (
    IoSeries,
    LagSpec,
    build_narx_dataset,
    direct_predictions,
    iterated_predictions,
    narx_index_table,
    predict_direct,
    predict_iterated,
    rmse,
    write_trace_csv,
)


def _linear_model(coef):
    """Model ``sum_j coef_j x_j`` over the degree-one monomials of ``len(coef)`` variables."""
    n = len(coef)
    B = monomial_basis(n, 1)
    a = np.zeros(len(B))
    for j, f in enumerate(B):
        if sum(f.exponents) == 1:
            a[j] = coef[f.exponents.index(1)]
    return Model(B, a)


def test_first_regressor_example():
    s = IoSeries(np.zeros(4), [1.0, 2.0, 3.0, 4.0])
    ds = build_narx_dataset(s, LagSpec(n_a=2, n_b=1))
    np.testing.assert_array_equal(ds.x[0], [2.0, 1.0, 0.0])
    assert ds.z[0] == 3.0


def test_direct_dimension():
    assert LagSpec(3, 2, horizon=3, direct=True).n_x == 7
    assert LagSpec(3, 2, horizon=7, direct=True).n_x == 11


def test_direct_one_step_equals_one_step():
    rng = np.random.default_rng(41)
    s = IoSeries(rng.normal(size=50), rng.normal(size=50))
    a = build_narx_dataset(s, LagSpec(3, 2, horizon=1, direct=True))
    b = build_narx_dataset(s, LagSpec(3, 2))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.z, b.z)


def test_direct_regressor_contents():
    # u_t = 100 + t and y_t = t make every entry identify its own index
    n = 30
    s = IoSeries(100.0 + np.arange(n), np.arange(n, dtype=float))
    t, _, _, target = narx_index_table(n, LagSpec(3, 2, horizon=3, direct=True))
    ds = build_narx_dataset(s, LagSpec(3, 2, horizon=3, direct=True))
    t0 = t[0]
    np.testing.assert_array_equal(ds.x[0], [t0, t0 - 1, t0 - 2, 100 + t0 + 1, 100 + t0, 100 + t0 - 1, 100 + t0 - 2])
    assert ds.z[0] == t0 + 3 and target[0] == t0 + 3


def test_series_too_short():
    with pytest.raises(DimensionError):
        build_narx_dataset(IoSeries(np.zeros(3), np.zeros(3)), LagSpec(3, 2))


def test_lagspec_validation():
    with pytest.raises(ValueError):
        LagSpec(n_a=0)
    with pytest.raises(ValueError):
        LagSpec(horizon=0)


@settings(max_examples=30, deadline=None)
@given(n_a=st.integers(1, 4), n_b=st.integers(0, 3), k=st.integers(1, 6), direct=st.booleans(),
       delay=st.integers(0, 2))
def test_regressor_alignment(n_a, n_b, k, direct, delay):
    n = 40
    lags = LagSpec(n_a, n_b, k, direct, delay)
    s = IoSeries(1000.0 + np.arange(n), np.arange(n, dtype=float))
    ds = build_narx_dataset(s, lags)
    t, _, _, target = narx_index_table(n, lags)
    step = k if direct else 1
    for row, tt in enumerate(t):
        assert ds.z[row] == tt + step == target[row]
        np.testing.assert_array_equal(ds.x[row, :n_a], tt - np.arange(n_a))
        newest = tt + step - 1 - delay
        np.testing.assert_array_equal(ds.x[row, n_a:], 1000.0 + newest - np.arange(lags.n_inputs))


def test_geometric_iteration():
    m = _linear_model([0.5])
    out = predict_iterated(m, [8.0], [], [], 3, LagSpec(n_a=1, n_b=0))
    np.testing.assert_allclose(out, [4.0, 2.0, 1.0])


def test_single_step_equals_evaluation():
    rng = np.random.default_rng(42)
    m = Model(monomial_basis(5, 1), rng.normal(size=32))
    y = rng.normal(size=3)
    u = rng.normal(size=2)
    out = predict_iterated(m, y, u, [0.3], 1, LagSpec())
    assert out[0] == m.value(np.concatenate([y[::-1], u[::-1]])[None, :])[0]


def test_manual_unroll():
    rng = np.random.default_rng(43)
    c = rng.normal(size=4) * 0.5
    m = _linear_model(c)
    lags = LagSpec(n_a=2, n_b=2)
    y = list(rng.normal(size=2))
    u_past = rng.normal(size=2)
    fut = rng.normal(size=4)
    out = predict_iterated(m, y, u_past, fut, 4, lags)
    u = list(u_past) + list(fut)   # u[1] is u_{t-1}, u[2] is u_t
    yy = list(y)
    for s in range(4):
        yt, ytm1 = yy[-1], yy[-2]
        ut1, ut2 = u[1 + s], u[s]
        yy.append(c[0] * yt + c[1] * ytm1 + c[2] * ut1 + c[3] * ut2)
    np.testing.assert_allclose(out, yy[2:], atol=1e-12)


def test_batched_iteration_matches_single_origin():
    rng = np.random.default_rng(44)
    lags = LagSpec(3, 2)
    m = _linear_model(rng.normal(size=5) * 0.3)
    s = IoSeries(rng.normal(size=40), rng.normal(size=40))
    k = 4
    target, preds = iterated_predictions(m, s, k, lags)
    for row in (0, 5, len(target) - 1):
        t = int(target[row]) - k
        single = predict_iterated(m, s.y[: t + 1], s.u[:t], s.u[t:], k, lags)
        assert preds[row] == pytest.approx(single[-1], abs=1e-12)


def test_zero_input_coefficients_ignore_inputs():
    m = _linear_model([0.9, -0.2, 0.0, 0.0])
    lags = LagSpec(n_a=2, n_b=2)
    a = predict_iterated(m, [1.0, 2.0], [0.5, 0.5], np.zeros(5), 5, lags)
    b = predict_iterated(m, [1.0, 2.0], [0.5, 0.5], np.full(5, 7.0), 5, lags)
    np.testing.assert_array_equal(a, b)


def test_iterated_history_checks():
    m = _linear_model([1.0, 1.0, 1.0])
    with pytest.raises(DimensionError):
        predict_iterated(m, [1.0], [0.0], [0.0], 1, LagSpec(n_a=2, n_b=1))
    with pytest.raises(ValueError):
        predict_iterated(m, [1.0, 2.0], [0.0], [0.0], 0, LagSpec(n_a=2, n_b=1))


def test_direct_prediction():
    m = _linear_model([1.0, 2.0, 3.0])
    assert predict_direct(m, [1.0, 1.0, 1.0]) == 6.0
    assert predict_direct(m, [0.0, 0.0, 0.0]) == 0.0
    assert predict_direct(m, [1.0, -1.0, 0.5]) == pytest.approx(0.5)
    with pytest.raises(DimensionError):
        predict_direct(m, [1.0, 2.0])


def test_direct_predictions_align_with_targets():
    rng = np.random.default_rng(45)
    s = IoSeries(rng.normal(size=30), rng.normal(size=30))
    lags = LagSpec(3, 2, horizon=3, direct=True)
    m = _linear_model(rng.normal(size=lags.n_x))
    target, preds = direct_predictions(m, s, lags)
    ds = build_narx_dataset(s, lags)
    np.testing.assert_array_equal(s.y[target], ds.z)
    np.testing.assert_allclose(preds, m.value(ds.x))


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(math.sqrt(12.5))
    assert rmse(np.arange(5) + 0.25, np.arange(5)) == pytest.approx(0.25)
    with pytest.raises(DimensionError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        rmse([], [])


def test_trace_csv(tmp_path):
    write_trace_csv(tmp_path / "t.csv", [3, 4], [1.0, 2.0], [1.5, 2.5], [0.0, 1.0], [2.0, 3.0])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,y_true,y_pred,lower,upper"
    assert lines[1] == "3,1,1.5,0,2"
