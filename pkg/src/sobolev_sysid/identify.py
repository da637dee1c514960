"""Coefficient identification (Methods 1 and 2) and feasible-set membership."""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .basis import BasisSet, eval_basis, eval_basis_derivative
from .data import RegressionMatrices
from .errors import ConvergenceError, DimensionError, InfeasibleError, MissingChannelError
from .solver import (
    SolverConfig,
    normalize_q,
    normalize_r,
    solve_constrained_minnorm,
    solve_regularized,
    vector_norm,
    within_ball,
)

INFEASIBLE_HINT = (
    "no coefficient vector over this basis satisfies the noise bounds; "
    "enlarge the basis or relax the bounds"
)


@dataclass(frozen=True, eq=False)
class Model:
    """Linear-in-parameters model ``f(x) = sum_j a_j phi_j(x)``."""

    basis: BasisSet
    coef: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        coef = np.array(self.coef, dtype=float).reshape(-1)
        if coef.shape[0] != len(self.basis):
            raise DimensionError(f"{coef.shape[0]} coefficients for a basis of size {len(self.basis)}")
        if not np.all(np.isfinite(coef)):
            raise ValueError("model coefficients must be finite")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    @property
    def n_x(self) -> int:
        return self.basis.n_x

    def value(self, X) -> np.ndarray:
        return self.basis.design(X) @ self.coef

    def partial(self, X, i: int) -> np.ndarray:
        return self.basis.design_partial(X, i) @ self.coef

    def channel(self, X, i: int) -> np.ndarray:
        return self.value(X) if i == 0 else self.partial(X, i)

    def gradient(self, X) -> np.ndarray:
        return np.column_stack([self.partial(X, i) for i in range(1, self.n_x + 1)])

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.to_list(),
            "coefficients": [float(a) for a in self.coef],
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Model":
        return cls(BasisSet.from_list(d["basis"]), d["coefficients"], dict(d.get("info", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_dict(json.loads(Path(path).read_text()))


def zero_model(basis: BasisSet) -> Model:
    return Model(basis, np.zeros(len(basis)), {"method": "zero"})


def eval_model(model: Model, x) -> float:
    return float(eval_basis(model.basis, x) @ model.coef)


def eval_model_derivative(model: Model, x, i: int) -> float:
    return float(eval_basis_derivative(model.basis, x, i) @ model.coef)


@dataclass(frozen=True)
class NoiseBounds:
    """Radii ``mu[i]`` of the noise balls ``||d^i||_q <= mu[i]`` per channel.

    ``per_sample`` optionally carries element-wise bounds ``zeta[i]`` (one per
    sample) used by the uncertainty envelopes when ``q = 2``.  When they come
    from a relative-plus-absolute rule, ``relabs[i] = (zeta_r, zeta_a)`` is
    checked against ``zeta_r * mu + zeta_a * sqrt(L) <= mu``.
    """

    mu: Mapping[int, float]
    q: float = 2
    per_sample: Mapping[int, np.ndarray] | None = None
    relabs: Mapping[int, tuple[float, float]] | None = None

    def __post_init__(self):
        mu = self.mu
        if not isinstance(mu, Mapping):
            mu = dict(enumerate(mu))
        mu = {int(i): float(m) for i, m in mu.items()}
        if any(not (m >= 0 and math.isfinite(m)) for m in mu.values()):
            raise ValueError(f"noise radii must be finite and >= 0, got {mu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "q", normalize_q(self.q))
        if self.per_sample is not None:
            ps = {int(i): np.asarray(z, dtype=float) for i, z in self.per_sample.items()}
            if any(np.any(z < 0) for z in ps.values()):
                raise ValueError("per-sample bounds must be non-negative")
            object.__setattr__(self, "per_sample", ps)
            for i, (zr, za) in (self.relabs or {}).items():
                if i in ps and i in mu:
                    check_relabs_consistency(zr, za, mu[i], ps[i].shape[0])


def check_relabs_consistency(zeta_r: float, zeta_a: float, mu: float, L: int) -> None:
    """Reject ``(zeta_r, zeta_a)`` pairs whose per-sample bounds could exceed ``mu`` in 2-norm."""
    if zeta_r < 0 or zeta_a < 0:
        raise ValueError(f"zeta_r and zeta_a must be >= 0, got {zeta_r}, {zeta_a}")
    lhs = zeta_r * mu + zeta_a * math.sqrt(L)
    if lhs > mu * (1 + 1e-12):
        raise ValueError(
            f"inconsistent relative/absolute bound: zeta_r*mu + zeta_a*sqrt(L) = {lhs:.6g} exceeds mu = {mu:.6g}")

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(sorted(self.mu))


class _WeightedBlocks(Sequence):
    """Lazy ``(weight, Phi, z)`` view so large bases never stack all channels at once."""

    def __init__(self, matrices: RegressionMatrices, weights: Mapping[int, float]):
        self._m = matrices
        self._items = [(i, w) for i, w in sorted(weights.items()) if w > 0]

    def __len__(self):
        return len(self._items)

    def __getitem__(self, k):
        i, w = self._items[k]
        z, Phi = self._m.block(i)
        return w, Phi, z


def _weights_dict(weights) -> dict[int, float]:
    if isinstance(weights, Mapping):
        out = {int(i): float(w) for i, w in weights.items()}
    else:
        out = {i: float(w) for i, w in enumerate(weights)}
    if any(not (w >= 0 and math.isfinite(w)) for w in out.values()):
        raise ValueError(f"channel weights must be finite and >= 0, got {out}")
    return out


def identify_method2(matrices: RegressionMatrices, weights, Lambda: float, r: int = 1,
                     config: SolverConfig | None = None) -> Model:
    """Fit ``min sum_i weights[i] ||z^i - Phi^i a||_2^2 + Lambda ||a||_r``.

    ``weights`` maps channel to weight (a plain sequence is indexed by
    channel).  Zero-weight channels are skipped, so function-only fits do not
    need derivative data.
    """
    r = normalize_r(r)
    w = _weights_dict(weights)
    used = {i: v for i, v in w.items() if v > 0}
    if not used:
        raise ValueError("at least one channel weight must be positive")
    missing = [i for i in used if i not in matrices.channels]
    if missing:
        raise MissingChannelError(f"channels {missing} have positive weight but no data")
    report = solve_regularized(_WeightedBlocks(matrices, used), Lambda, r, config)
    if not report.converged:
        raise ConvergenceError(f"Method 2 solve did not converge in {report.iterations} iterations", report)
    info = {
        "method": 2,
        "r": r,
        "q": 2,
        "weights": {str(i): v for i, v in sorted(w.items())},
        "Lambda": float(Lambda),
        "solve": report.to_dict(),
    }
    return Model(matrices.basis, report.alpha, info)


def identify_method1(matrices: RegressionMatrices, bounds: NoiseBounds, r: int = 1,
                     config: SolverConfig | None = None) -> Model:
    """Minimum-norm coefficients subject to ``||z^i - Phi^i a||_q <= mu^i``.

    Only channels present in both ``matrices`` and ``bounds`` are constrained.
    Raises :class:`InfeasibleError` when the constraint set is empty.
    """
    r = normalize_r(r)
    channels = [i for i in matrices.channels if i in bounds.mu]
    if not channels:
        raise ValueError("no channel is covered by both the data and the noise bounds")
    blocks = [(matrices.phi(i), matrices.z(i), bounds.mu[i]) for i in channels]
    try:
        report = solve_constrained_minnorm(blocks, bounds.q, r, config)
    except InfeasibleError as exc:
        res = dict(zip(channels, exc.residuals or exc.report.residuals))
        detail = ", ".join(f"channel {i}: residual {res[i]:.4g} vs bound {bounds.mu[i]:.4g}" for i in res)
        raise InfeasibleError(f"{INFEASIBLE_HINT} ({detail})", exc.report, exc.residuals) from exc
    if not report.converged:
        raise ConvergenceError(f"Method 1 solve did not converge in {report.iterations} iterations", report)
    info = {
        "method": 1,
        "r": r,
        "q": "inf" if bounds.q == math.inf else 2,
        "mu": {str(i): bounds.mu[i] for i in channels},
        "solve": report.to_dict(),
    }
    return Model(matrices.basis, report.alpha, info)


def check_ffs_membership(model: Model, matrices: RegressionMatrices,
                         bounds: NoiseBounds) -> tuple[dict[int, float], bool]:
    """Per-channel residual norms and whether the model satisfies every noise bound."""
    residuals = {}
    ok = True
    for i in matrices.channels:
        if i not in bounds.mu:
            continue
        z, Phi = matrices.block(i)
        residuals[i] = vector_norm(z - Phi @ model.coef, bounds.q)
        ok = ok and within_ball(residuals[i], bounds.mu[i])
    return residuals, ok
