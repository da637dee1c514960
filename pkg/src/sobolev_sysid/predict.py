"""NARX regressors, iterated and direct multi-step prediction, RMSE scoring.

Time alignment: with ``input_delay = d`` the one-step regressor at time ``t``
is ``(y_t, ..., y_{t-n_a+1}, u_{t-d}, ..., u_{t-d-n_b+1})`` and its target is
``y_{t+1}``.  The direct ``k``-step regressor keeps the same output lags and
widens the input window forward to ``u_{t+k-1-d}``, giving ``k + n_b - 1``
input entries and target ``y_{t+k}``.  With ``k = 1`` both forms coincide.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DimensionError


@dataclass(frozen=True)
class LagSpec:
    n_a: int = 3
    n_b: int = 2
    horizon: int = 1
    direct: bool = False
    input_delay: int = 1

    def __post_init__(self):
        if self.n_a < 1:
            raise ValueError(f"n_a must be >= 1, got {self.n_a}")
        if self.n_b < 0:
            raise ValueError(f"n_b must be >= 0, got {self.n_b}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.input_delay < 0:
            raise ValueError(f"input_delay must be >= 0, got {self.input_delay}")

    @property
    def step(self) -> int:
        """How far ahead the target lies: ``horizon`` for direct, 1 otherwise."""
        return self.horizon if self.direct else 1

    @property
    def n_inputs(self) -> int:
        return self.step + self.n_b - 1

    @property
    def n_x(self) -> int:
        return self.n_a + self.n_inputs

    @property
    def first_time(self) -> int:
        """Earliest ``t`` whose regressor only touches non-negative indices."""
        return max(self.n_a - 1, self.input_delay + self.n_b - 1, 0)

    def one_step(self) -> "LagSpec":
        return LagSpec(self.n_a, self.n_b, self.horizon, False, self.input_delay)


@dataclass(frozen=True, eq=False)
class IoSeries:
    """Input/output sequences sampled every ``sampling_time`` seconds."""

    u: np.ndarray
    y: np.ndarray
    sampling_time: float = 1.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float).reshape(-1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if u.shape != y.shape:
            raise DimensionError(f"input length {u.shape[0]} differs from output length {y.shape[0]}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ValueError("series contains non-finite values")
        if not self.sampling_time > 0:
            raise ValueError("sampling_time must be positive")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]


def narx_index_table(n_samples: int, lags: LagSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Times ``t``, output-lag indices, input indices and target indices of every row."""
    t0 = lags.first_time
    t1 = n_samples - 1 - lags.step
    if t1 < t0:
        raise DimensionError(
            f"series of length {n_samples} too short for n_a={lags.n_a}, n_b={lags.n_b}, "
            f"step={lags.step}, delay={lags.input_delay}")
    t = np.arange(t0, t1 + 1)
    y_idx = t[:, None] - np.arange(lags.n_a)[None, :]
    newest = lags.step - 1 - lags.input_delay
    u_idx = t[:, None] + newest - np.arange(lags.n_inputs)[None, :]
    return t, y_idx, u_idx, t + lags.step


def build_narx_dataset(series: IoSeries, lags: LagSpec) -> Dataset:
    """Regressor/target pairs for one-step or direct ``k``-step identification."""
    _, y_idx, u_idx, target = narx_index_table(len(series), lags)
    X = np.hstack([series.y[y_idx], series.u[u_idx]])
    return Dataset(X, series.y[target])


def predict_iterated(model, y_history, u_history, future_inputs, k: int, lags: LagSpec) -> np.ndarray:
    """Run a one-step model ``k`` times from time ``t``, feeding predictions back.

    ``y_history`` ends with ``y_t``; ``u_history`` ends with ``u_{t-1}``;
    ``future_inputs`` starts at ``u_t``.  Returns ``(y_{t+1}, ..., y_{t+k})``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    y = list(np.asarray(y_history, dtype=float).reshape(-1))
    u_hist = np.asarray(u_history, dtype=float).reshape(-1)
    fut = np.asarray(future_inputs, dtype=float).reshape(-1)
    if len(y) < lags.n_a:
        raise DimensionError(f"need {lags.n_a} past outputs, got {len(y)}")
    # u_all[j] is u_{t - len(u_hist) + j}
    u_all = np.concatenate([u_hist, fut])
    offset = len(u_hist)
    need_past = lags.input_delay + lags.n_b - 1
    need_future = k - lags.input_delay
    if lags.n_b and offset < need_past:
        raise DimensionError(f"need {need_past} past inputs, got {offset}")
    if lags.n_b and len(fut) < need_future:
        raise DimensionError(f"need {need_future} future inputs for k={k}, got {len(fut)}")
    out = np.empty(k)
    for s in range(k):
        reg = y[::-1][: lags.n_a]
        newest = offset + s - lags.input_delay
        reg += [u_all[newest - j] for j in range(lags.n_b)]
        out[s] = float(model.value(np.asarray(reg)[None, :])[0])
        y.append(out[s])
    return out


def iterated_predictions(model, series: IoSeries, k: int, lags: LagSpec) -> tuple[np.ndarray, np.ndarray]:
    """``k``-step iterated predictions from every admissible origin of ``series``.

    Returns the target times ``t + k`` and the predictions, batched over origins.
    """
    one = LagSpec(lags.n_a, lags.n_b, k, True, lags.input_delay)
    t, _, _, target = narx_index_table(len(series), one)
    window = series.y[t[:, None] - np.arange(lags.n_a)[None, :]]
    for s in range(k):
        newest = t + s - lags.input_delay
        U = series.u[newest[:, None] - np.arange(lags.n_b)[None, :]]
        pred = model.value(np.hstack([window, U]))
        window = np.hstack([pred[:, None], window[:, :-1]])
    return target, window[:, 0].copy()


def predict_direct(model_k, regressor) -> float:
    """Single evaluation of a direct ``k``-step model."""
    x = np.asarray(regressor, dtype=float).reshape(-1)
    if x.shape[0] != model_k.n_x:
        raise DimensionError(f"regressor has length {x.shape[0]}, model expects {model_k.n_x}")
    return float(model_k.value(x[None, :])[0])


def direct_predictions(model_k, series: IoSeries, lags: LagSpec) -> tuple[np.ndarray, np.ndarray]:
    """Target times and direct-model predictions for every admissible row."""
    if not lags.direct:
        raise ValueError("direct_predictions needs a LagSpec with direct=True")
    ds = build_narx_dataset(series, lags)
    _, _, _, target = narx_index_table(len(series), lags)
    return target, model_k.value(ds.x)


def rmse(predictions, truths) -> float:
    p = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(truths, dtype=float).reshape(-1)
    if p.shape != y.shape:
        raise DimensionError(f"{p.shape[0]} predictions vs {y.shape[0]} truths")
    if p.size == 0:
        raise ValueError("rmse of empty sequences")
    return math.sqrt(float(np.mean((p - y) ** 2)))


def write_trace_csv(path, t, y_true, y_pred, lower=None, upper=None) -> None:
    """``t,y_true,y_pred[,lower,upper]`` with 17 significant digits."""
    cols = [np.asarray(t, dtype=float), np.asarray(y_true, float), np.asarray(y_pred, float)]
    names = ["t", "y_true", "y_pred"]
    if lower is not None and upper is not None:
        cols += [np.asarray(lower, float), np.asarray(upper, float)]
        names += ["lower", "upper"]
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack(cols), fmt="%.17g", delimiter=",", header=",".join(names), comments="")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
