"""Data generators: the univariate sine benchmark and the Chua circuit.

Random numbers come from ``numpy.random.Generator`` with the PCG64 bit
generator seeded through ``SeedSequence``; normal variates use numpy's
ziggurat ``standard_normal``.  Both are stable across platforms for a given
numpy release, which is what makes generated datasets reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import NumericalError
from .predict import IoSeries

BLOWUP = 1e6


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean normal noise with standard deviation ``std``."""

    std: float = 0.0
    seed: int = 0
    distribution: str = "normal"
    mean: float = 0.0

    def __post_init__(self):
        if not (self.std >= 0 and math.isfinite(self.std)):
            raise ValueError(f"noise std must be finite and >= 0, got {self.std}")
        if self.distribution != "normal":
            raise ValueError(f"unsupported noise distribution {self.distribution!r}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def draw(self, shape) -> np.ndarray:
        return self.mean + self.std * self.generator().standard_normal(shape)


def univariate_truth(x):
    return np.sin(1.1 * np.asarray(x, dtype=float))


def univariate_truth_derivative(x):
    return 1.1 * np.cos(1.1 * np.asarray(x, dtype=float))


def gen_univariate(L: int = 100, domain=(-2.0, 3.0), noise: NoiseSpec | None = None,
                   include_derivatives: bool = True, L_validation: int = 1000) -> tuple[Dataset, Dataset]:
    """Noisy samples of ``sin(1.1 x)`` (and its derivative) on an equispaced grid.

    Returns the identification set and a noise-free validation set (with
    derivatives) on ``L_validation`` equispaced points over the same domain.
    Value and derivative noise are independent draws from one stream.
    """
    if L < 2:
        raise ValueError("L must be >= 2")
    noise = noise or NoiseSpec()
    lo, hi = domain
    x = np.linspace(lo, hi, L)
    e = noise.draw((2, L))
    z = univariate_truth(x) + e[0]
    dz = univariate_truth_derivative(x) + e[1] if include_derivatives else None
    ident = Dataset(x[:, None], z, None if dz is None else dz[:, None])
    xv = np.linspace(lo, hi, L_validation)
    val = Dataset(xv[:, None], univariate_truth(xv), univariate_truth_derivative(xv)[:, None], "analytic")
    return ident, val


@dataclass(frozen=True)
class ChuaParams:
    alpha: float = 10.4
    beta: float = 16.5
    R: float = 0.1
    c1: float = -1.16
    c3: float = 0.041
    Ts: float = 0.01

    def __post_init__(self):
        if not self.Ts > 0:
            raise ValueError("sampling time Ts must be positive")

    def rho(self, v):
        return self.c1 * v + self.c3 * v**3

    def rho_prime(self, v):
        return self.c1 + 3.0 * self.c3 * np.asarray(v) ** 2


def chua_euler_step(params: ChuaParams, state, u: float, xi: float = 0.0) -> tuple[float, float, float]:
    """One forward-Euler step with input and disturbance held over the step."""
    x1, x2, x3 = state
    p = params
    d1 = p.alpha * (x2 - x1 - (p.c1 * x1 + p.c3 * x1**3))
    d2 = x1 - x2 + x3 + u + xi
    d3 = -p.beta * x2 - p.R * x3
    return x1 + p.Ts * d1, x2 + p.Ts * d2, x3 + p.Ts * d3


def simulate_chua(params: ChuaParams | None = None, input_noise: NoiseSpec | None = None,
                  disturbance: NoiseSpec | None = None, duration: float = 60.0,
                  x0=(0.1, 0.0, 0.0)) -> IoSeries:
    """Forward-Euler simulation of the Chua circuit; output ``y = x1``.

    ``y_t`` is the state before the update driven by ``u_t``, so the series has
    ``round(duration / Ts)`` samples.
    """
    params = params or ChuaParams()
    input_noise = input_noise or NoiseSpec(std=1.0, seed=0)
    disturbance = disturbance or NoiseSpec(std=0.0, seed=1)
    if not duration > 0:
        raise ValueError("duration must be positive")
    n = int(round(duration / params.Ts))
    u = input_noise.draw(n)
    xi = disturbance.draw(n)
    y = np.empty(n)
    state = tuple(float(v) for v in x0)
    for t in range(n):
        y[t] = state[0]
        state = chua_euler_step(params, state, u[t], xi[t])
        if not max(abs(s) for s in state) < BLOWUP:
            raise NumericalError(f"Chua simulation diverged at step {t + 1} (|state| >= {BLOWUP:g})")
    return IoSeries(u, y, params.Ts)


def chua_io_features(params: ChuaParams, y, u) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``(y_{t-1}, y_{t-2}, y_{t-3}, rho(y_{t-1}), ..., u_{t-2}, u_{t-3})`` and targets ``y_t``."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    t = np.arange(3, y.shape[0])
    ylag = np.column_stack([y[t - 1], y[t - 2], y[t - 3]])
    F = np.hstack([ylag, params.rho(ylag), np.column_stack([u[t - 2], u[t - 3]])])
    return F, y[t]


def chua_io_coefficients(params: ChuaParams | None = None, input_noise: NoiseSpec | None = None,
                         duration: float = 60.0, x0=(0.1, 0.0, 0.0)) -> tuple[np.ndarray, float]:
    """Coefficients ``b_1..b_8`` of the input-output form of the discretized circuit.

    Fitted by least squares on a noiseless trajectory (the map is linear in
    ``b`` once ``rho`` is applied to the lagged outputs).  Returns ``b`` and
    the RMS fit residual.
    """
    params = params or ChuaParams()
    series = simulate_chua(params, input_noise or NoiseSpec(std=1.0, seed=0),
                           NoiseSpec(std=0.0), duration, x0)
    F, target = chua_io_features(params, series.y, series.u)
    s = np.linalg.svd(F, compute_uv=False)
    if s[0] == 0 or s[-1] <= 1e-10 * s[0]:
        cond = math.inf if s[-1] == 0 else s[0] / s[-1]
        raise NumericalError(f"input-output coefficient fit is ill-conditioned (condition {cond:.3g}); "
                             "the trajectory is not exciting enough")
    b, *_ = np.linalg.lstsq(F, target, rcond=None)
    residual = math.sqrt(float(np.mean((F @ b - target) ** 2)))
    return b, residual


def chua_one_step(params: ChuaParams, b, regressor) -> np.ndarray:
    """``y_{t+1}`` from ``(y_t, y_{t-1}, y_{t-2}, u_{t-1}, u_{t-2})`` under the input-output form."""
    X = np.atleast_2d(np.asarray(regressor, dtype=float))
    Y = X[:, :3]
    return Y @ b[:3] + params.rho(Y) @ b[3:6] + X[:, 3:5] @ b[6:8]


def chua_true_derivatives(params: ChuaParams, b, regressor) -> np.ndarray:
    """Gradient of the one-step map over ``(y_t, y_{t-1}, y_{t-2}, u_{t-1}, u_{t-2})``.

    Accepts a single regressor of length 5 or a batch of shape ``(m, 5)``.
    """
    X = np.asarray(regressor, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    b = np.asarray(b, dtype=float)
    G = np.empty((X.shape[0], 5))
    G[:, :3] = b[:3] + b[3:6] * params.rho_prime(X[:, :3])
    G[:, 3] = b[6]
    G[:, 4] = b[7]
    return G[0] if single else G
