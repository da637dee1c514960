"""Lipschitz constants, noise-bound estimation and pointwise uncertainty envelopes.

For channel ``i`` (0 = function value, ``i >= 1`` = partial derivative) with
residual samples ``r_k = z_k^i - fhat^(i)(x_k)``, per-sample half-widths
``w_k`` and Lipschitz constant ``gamma`` of the residual, the envelope is::

    upper(x) = fhat^(i)(x) + min(cap,  min_k (r_k + w_k + gamma ||x - x_k||_inf))
    lower(x) = fhat^(i)(x) + max(-cap, max_k (r_k - w_k - gamma ||x - x_k||_inf))

where ``cap`` is absent for ``i = 0`` and equals the value-channel constant
``gamma^0`` for derivative channels.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from .data import Dataset
from .errors import RankDeficientError
from .gradest import GradEstConfig, estimate_gradients
from .identify import Model, NoiseBounds, check_relabs_consistency

# Rows of the query block per chunk: keeps the (rows, L) distance matrix small.
_CHUNK_ELEMENTS = 2_000_000


def _cap_for(i: int, gamma: Mapping[int, float]) -> float | None:
    if i == 0:
        return None
    if 0 not in gamma:
        raise KeyError("derivative-channel envelopes need the value-channel constant gamma[0]")
    return gamma[0]


def _inf_distances(Q: np.ndarray, X: np.ndarray) -> np.ndarray:
    D = np.abs(Q[:, 0, None] - X[None, :, 0])
    for d in range(1, X.shape[1]):
        np.maximum(D, np.abs(Q[:, d, None] - X[None, :, d]), out=D)
    return D


def _chunks(m: int, L: int):
    step = max(1, _CHUNK_ELEMENTS // max(L, 1))
    for s in range(0, m, step):
        yield slice(s, min(m, s + step))


def _cone_extremes(Q, X, upper_tips, lower_tips, gamma):
    """``min_k (upper_tips_k + gamma d_qk)`` and ``max_k (lower_tips_k - gamma d_qk)`` for each query row."""
    up = np.empty(Q.shape[0])
    lo = np.empty(Q.shape[0])
    for s in _chunks(Q.shape[0], X.shape[0]):
        D = gamma * _inf_distances(Q[s], X)
        up[s] = np.min(upper_tips[None, :] + D, axis=1)
        lo[s] = np.max(lower_tips[None, :] - D, axis=1)
    return up, lo


def residual_channels(dataset: Dataset, model: Model | None = None,
                      gradest_config: GradEstConfig | None = None) -> dict[int, np.ndarray]:
    """Residual samples ``z^i - fhat^(i)(x)`` for ``i = 0..n_x``.

    Missing derivative channels are estimated from the value residual.
    """
    X = dataset.x
    r0 = dataset.z - (model.value(X) if model is not None else 0.0)
    out = {0: r0}
    if dataset.has_derivatives:
        for i in range(1, dataset.n_x + 1):
            out[i] = dataset.channel(i) - (model.partial(X, i) if model is not None else 0.0)
    else:
        G = estimate_gradients(Dataset(X, r0), gradest_config).dz
        for i in range(1, dataset.n_x + 1):
            out[i] = G[:, i - 1]
    return out


@dataclass(frozen=True)
class LipschitzEstimate:
    """Per-channel Lipschitz constants of the residual, already multiplied by ``nu``."""

    gamma: Mapping[int, float]
    nu: float = 1.0
    sources: Mapping[int, str] | None = None

    def __post_init__(self):
        g = {int(i): float(v) for i, v in self.gamma.items()}
        if any(not (v >= 0 and math.isfinite(v)) for v in g.values()):
            raise ValueError(f"Lipschitz constants must be finite and >= 0, got {g}")
        object.__setattr__(self, "gamma", g)

    def __getitem__(self, i: int) -> float:
        return self.gamma[i]


def _first_difference_slope(X, r) -> float:
    """Largest slope between each sample and its nearest neighbour (inf-norm)."""
    tree = cKDTree(X)
    dist, idx = tree.query(X, k=2, p=np.inf)
    d = dist[:, 1]
    ok = d > 0
    if not ok.any():
        return 0.0
    return float(np.max(np.abs(r[idx[ok, 1]] - r[ok]) / d[ok]))


def estimate_lipschitz(dataset: Dataset, model: Model | None = None, nu: float = 1.0,
                       gradest_config: GradEstConfig | None = None, channels=None) -> LipschitzEstimate:
    """Lipschitz constants of the residual ``f - fhat`` and of its partial derivatives.

    ``gamma[0]`` is ``nu`` times the largest residual-gradient component.
    ``gamma[i]`` applies gradient estimation to the channel-``i`` residual
    samples and takes ``nu`` times the largest component.  If that local fit
    is rank deficient, nearest-neighbour difference slopes are used instead
    and a warning is issued.
    """
    if nu < 1:
        raise ValueError(f"safety factor nu must be >= 1, got {nu}")
    if dataset.L < 2:
        raise ValueError("need at least two samples")
    channels = range(dataset.n_x + 1) if channels is None else sorted(set(channels))
    res = residual_channels(dataset, model, gradest_config)
    gamma, sources = {}, {}
    for i in channels:
        if i == 0:
            grad = np.column_stack([res[j] for j in range(1, dataset.n_x + 1)])
            gamma[0] = nu * float(np.max(np.abs(grad)))
            sources[0] = "derivative samples"
            continue
        try:
            G = estimate_gradients(Dataset(dataset.x, res[i]), gradest_config).dz
            gamma[i] = nu * float(np.max(np.abs(G)))
            sources[i] = "local linear fit"
        except RankDeficientError as exc:
            warnings.warn(f"channel {i}: {exc}; using nearest-neighbour difference slopes", RuntimeWarning,
                          stacklevel=2)
            gamma[i] = nu * _first_difference_slope(dataset.x, res[i])
            sources[i] = "nearest-neighbour slopes"
    return LipschitzEstimate(gamma, nu, sources)


def relabs_noise_bounds(residuals, zeta_r: float, zeta_a: float, mu: float, L: int | None = None) -> np.ndarray:
    """Per-sample bounds ``zeta_r |delta_k| + zeta_a`` after the consistency check."""
    delta = np.asarray(residuals, dtype=float).reshape(-1)
    check_relabs_consistency(zeta_r, zeta_a, mu, delta.shape[0] if L is None else L)
    return zeta_r * np.abs(delta) + zeta_a


@dataclass(frozen=True, eq=False)
class EnvelopeSpec:
    """Everything needed to evaluate envelopes on channels ``residuals.keys()``."""

    model: Model | None
    x: np.ndarray
    residuals: Mapping[int, np.ndarray]
    gamma: Mapping[int, float]
    half_widths: Mapping[int, np.ndarray]

    def __post_init__(self):
        L = self.x.shape[0]
        if L == 0:
            raise ValueError("envelopes need at least one sample")
        for i, w in self.half_widths.items():
            if np.shape(w) != (L,) or np.any(np.asarray(w) < 0):
                raise ValueError(f"channel {i}: half-widths must be {L} non-negative values")

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(sorted(self.residuals))

    def model_channel(self, X, i):
        if self.model is None:
            return np.zeros(X.shape[0])
        return self.model.channel(X, i)


def build_envelope(dataset: Dataset, model: Model | None, lipschitz: LipschitzEstimate | Mapping[int, float],
                   noise: NoiseBounds, channels=None,
                   gradest_config: GradEstConfig | None = None) -> EnvelopeSpec:
    """Assemble an :class:`EnvelopeSpec` from data, model, constants and noise bounds.

    With ``q = inf`` every sample of channel ``i`` gets half-width ``mu[i]``;
    with ``q = 2`` the per-sample bounds in ``noise.per_sample`` are required.
    """
    gamma = lipschitz.gamma if isinstance(lipschitz, LipschitzEstimate) else dict(lipschitz)
    res = residual_channels(dataset, model, gradest_config)
    channels = sorted(gamma) if channels is None else sorted(set(channels))
    widths = {}
    for i in channels:
        if i not in gamma:
            raise KeyError(f"no Lipschitz constant for channel {i}")
        if noise.per_sample is not None and i in noise.per_sample:
            widths[i] = np.asarray(noise.per_sample[i], dtype=float)
        elif noise.q == math.inf:
            widths[i] = np.full(dataset.L, noise.mu[i])
        else:
            raise ValueError(f"channel {i}: 2-norm noise bounds need per-sample bounds for envelopes")
    return EnvelopeSpec(model, dataset.x, {i: res[i] for i in channels},
                        {i: gamma[i] for i in gamma}, widths)


def envelope_batch(spec: EnvelopeSpec, X, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper envelope of channel ``i`` at the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if spec.x.shape[1] == 1 else X[None, :]
    if X.shape[1] != spec.x.shape[1]:
        raise ValueError(f"query points have dimension {X.shape[1]}, data have {spec.x.shape[1]}")
    if i not in spec.residuals:
        raise KeyError(f"envelope not built for channel {i}")
    r, w = spec.residuals[i], spec.half_widths[i]
    up, lo = _cone_extremes(X, spec.x, r + w, r - w, spec.gamma[i])
    cap = _cap_for(i, spec.gamma)
    if cap is not None:
        up = np.minimum(cap, up)
        lo = np.maximum(-cap, lo)
    base = spec.model_channel(X, i)
    return base + lo, base + up


def envelope(spec: EnvelopeSpec, x, i: int) -> tuple[float, float]:
    """Lower and upper envelope of channel ``i`` at a single point."""
    lo, up = envelope_batch(spec, np.asarray(x, dtype=float).reshape(1, -1), i)
    return float(lo[0]), float(up[0])


def central_estimate(spec: EnvelopeSpec, X) -> np.ndarray:
    """Midpoint of the value-channel envelope (diagnostic only)."""
    lo, up = envelope_batch(spec, X, 0)
    return 0.5 * (lo + up)


def _feasible(A, B, mu, cap):
    up = A + mu
    lo = B - mu
    if cap is not None:
        up = np.minimum(cap, up)
        lo = np.maximum(-cap, lo)
    return bool(np.all(up > lo))


def minimal_noise_bound(x, z, gamma: float, gamma_bar: float | None = None, tol: float = 1e-9) -> float:
    """Smallest ``mu`` with upper > lower at every sample when ``fhat = 0``, by bisection.

    Returns the midpoint of the final bracket, which has width at most ``tol``.
    """
    X = np.asarray(x, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    z = np.asarray(z, dtype=float).reshape(-1)
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma_bar is not None and not gamma_bar > 0:
        raise ValueError("the derivative cap must be positive for the bounds to separate")
    A, B = _cone_extremes(X, X, z, z, gamma)
    lo, hi = 0.0, max(1.0, float(np.max(np.abs(z))))
    while not _feasible(A, B, hi, gamma_bar):
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _feasible(A, B, mid, gamma_bar):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def estimate_noise_bound(dataset: Dataset, i: int, gamma: float, nu: float = 1.0,
                         model: Model | None = None, gamma_bar: float | None = None) -> float:
    """``nu`` times :func:`minimal_noise_bound` on channel ``i``.

    By default the channel samples themselves are used (``fhat = 0``); pass
    ``model`` to use its residuals instead.
    """
    if nu < 1:
        raise ValueError(f"safety factor nu must be >= 1, got {nu}")
    z = dataset.channel(i)
    if model is not None:
        z = z - model.channel(dataset.x, i)
    return nu * minimal_noise_bound(dataset.x, z, gamma, gamma_bar)


def write_envelope_csv(path, X, lower, upper, value=None) -> None:
    """``x1..xn,lower,upper[,model]`` with 17 significant digits."""
    X = np.asarray(X, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    cols = [X, np.asarray(lower)[:, None], np.asarray(upper)[:, None]]
    names = [f"x{j}" for j in range(1, X.shape[1] + 1)] + ["lower", "upper"]
    if value is not None:
        cols.append(np.asarray(value)[:, None])
        names.append("model")
    buf = io.StringIO()
    np.savetxt(buf, np.hstack(cols), fmt="%.17g", delimiter=",", header=",".join(names), comments="")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
