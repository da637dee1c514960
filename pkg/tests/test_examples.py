import numpy as np
import pytest
from scipy.integrate import solve_ivp

from sobolev_sysid.errors import NumericalError
from sobolev_sysid.examples import (
    ChuaParams,
    NoiseSpec,
    chua_euler_step,
    chua_io_coefficients,
    chua_io_features,
    chua_one_step,
    chua_true_derivatives,
    gen_univariate,
    simulate_chua,
)


@pytest.fixture(scope="module")
def chua_b():
    b, residual = chua_io_coefficients()
    return b, residual


def test_univariate_noise_free_values():
    ident, val = gen_univariate(L=101, domain=(-1.0, 1.0), noise=NoiseSpec(std=0.0))
    assert ident.x[50, 0] == 0.0
    assert ident.z[50] == 0.0
    assert ident.dz[50, 0] == pytest.approx(1.1)
    assert val.provenance == "analytic"


def test_univariate_grid():
    ident, val = gen_univariate()
    assert ident.L == 100 and val.L == 1000
    assert ident.x[0, 0] == -2.0 and ident.x[-1, 0] == 3.0
    np.testing.assert_allclose(np.diff(ident.x[:, 0]), 5 / 99)


def test_univariate_determinism_and_noise_level():
    a, _ = gen_univariate(noise=NoiseSpec(std=0.05, seed=3))
    b, _ = gen_univariate(noise=NoiseSpec(std=0.05, seed=3))
    c, _ = gen_univariate(noise=NoiseSpec(std=0.05, seed=4))
    np.testing.assert_array_equal(a.to_array(), b.to_array())
    assert not np.array_equal(a.z, c.z)
    e = a.z - np.sin(1.1 * a.x[:, 0])
    assert 0.03 < np.std(e) < 0.07


def test_univariate_without_derivatives():
    ident, _ = gen_univariate(include_derivatives=False)
    assert not ident.has_derivatives


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(std=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(distribution="uniform")


def test_origin_is_equilibrium():
    s = simulate_chua(input_noise=NoiseSpec(std=0.0), disturbance=NoiseSpec(std=0.0), x0=(0.0, 0.0, 0.0))
    assert np.all(s.y == 0.0)


def test_sample_count_and_determinism():
    a = simulate_chua()
    b = simulate_chua()
    assert len(a) == 6000
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.u, b.u)


def test_blow_up_is_reported():
    with pytest.raises(NumericalError, match="step"):
        simulate_chua(ChuaParams(c3=-1.0), duration=5.0, x0=(5.0, 0.0, 0.0))


def test_io_coefficients_are_exact(chua_b):
    b, residual = chua_b
    assert b.shape == (8,)
    assert residual < 1e-8


def test_io_coefficients_are_least_squares_optimal(chua_b):
    b, _ = chua_b
    p = ChuaParams()
    s = simulate_chua(p, NoiseSpec(std=1.0, seed=0), NoiseSpec(std=0.0))
    F, y = chua_io_features(p, s.y, s.u)
    base = np.sqrt(np.mean((F @ b - y) ** 2))
    for j in range(8):
        for sign in (1, -1):
            bb = b.copy()
            bb[j] += sign * 1e-3
            assert np.sqrt(np.mean((F @ bb - y) ** 2)) > base


def test_io_coefficients_reject_flat_trajectory():
    with pytest.raises(NumericalError, match="ill-conditioned"):
        chua_io_coefficients(input_noise=NoiseSpec(std=0.0), x0=(0.0, 0.0, 0.0))


def test_one_step_map_reproduces_simulation(chua_b):
    b, _ = chua_b
    p = ChuaParams()
    s = simulate_chua(p, NoiseSpec(std=1.0, seed=9), NoiseSpec(std=0.0), duration=5.0)
    t = np.arange(2, len(s) - 1)
    X = np.column_stack([s.y[t], s.y[t - 1], s.y[t - 2], s.u[t - 1], s.u[t - 2]])
    np.testing.assert_allclose(chua_one_step(p, b, X), s.y[t + 1], atol=1e-9)


def test_true_derivatives_at_zero(chua_b):
    b, _ = chua_b
    p = ChuaParams()
    g = chua_true_derivatives(p, b, np.array([0.0, 0.0, 0.0, 0.3, -0.7]))
    np.testing.assert_allclose(g[:3], b[:3] + b[3:6] * p.c1)
    assert g[3] == b[6] and g[4] == b[7]


def test_true_derivatives_match_finite_differences(chua_b):
    b, _ = chua_b
    p = ChuaParams()
    rng = np.random.default_rng(51)
    X = rng.uniform(-3, 3, (20, 5))
    G = chua_true_derivatives(p, b, X)
    h = 1e-5
    for j in range(5):
        e = np.zeros(5)
        e[j] = h
        fd = (chua_one_step(p, b, X + e) - chua_one_step(p, b, X - e)) / (2 * h)
        np.testing.assert_allclose(G[:, j], fd, atol=1e-8)


def test_chaotic_trajectory_is_bounded_and_aperiodic():
    s = simulate_chua(input_noise=NoiseSpec(std=0.0), disturbance=NoiseSpec(std=0.0))
    assert np.max(np.abs(s.y)) < 50
    y = s.y[1000:] - np.mean(s.y[1000:])
    n = y.shape[0]
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf = acf / acf[0] * n / (n - np.arange(n))
    lags = acf[1:2001]
    # smooth sampling keeps the first lags near 1; after decorrelating once,
    # a periodic orbit would bring the autocorrelation back above 0.99
    first_drop = int(np.argmax(lags < 0.99))
    assert lags[first_drop] < 0.99
    assert np.all(lags[first_drop:] < 0.99)


def _rhs(p):
    def f(_, x):
        x1, x2, x3 = x
        return [p.alpha * (x2 - x1 - p.rho(x1)), x1 - x2 + x3, -p.beta * x2 - p.R * x3]
    return f


def test_euler_local_error_is_second_order():
    state = (1.2, -0.3, 0.8)
    errors = []
    steps = (0.01, 0.005, 0.0025)
    for h in steps:
        p = ChuaParams(Ts=h)
        euler = chua_euler_step(p, state, 0.0)
        ref = solve_ivp(_rhs(p), (0.0, h), state, method="DOP853", rtol=1e-13, atol=1e-15).y[:, -1]
        errors.append(abs(euler[0] - ref[0]))
    order = np.polyfit(np.log(steps), np.log(errors), 1)[0]
    assert order >= 1.9
