"""Grid surrogate of the first-order Sobolev distance between two functions.

The distance is the sum over channels (value and each first partial) of the
``L_p`` norm of the difference.  ``p = 2`` uses the midpoint rule on the
cells of a regular lattice; ``p = inf`` takes the maximum over the lattice
nodes, endpoints included.  Both are reporting metrics, not certified norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class GridSpec:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        n = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not len(lo) == len(hi) == len(n):
            raise DimensionError("lower, upper and counts must have one entry per dimension")
        if any(c < 2 for c in n):
            raise ValueError(f"grid counts must be >= 2, got {n}")
        if not all(math.isfinite(a) and math.isfinite(b) and a < b for a, b in zip(lo, hi)):
            raise ValueError("grid bounds must be finite with lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "counts", n)

    @property
    def n_x(self) -> int:
        return len(self.counts)

    def _lattice(self, axes) -> np.ndarray:
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.reshape(-1) for m in mesh])

    def nodes(self) -> np.ndarray:
        return self._lattice([np.linspace(a, b, c) for a, b, c in zip(self.lower, self.upper, self.counts)])

    def midpoints(self) -> tuple[np.ndarray, float]:
        """Cell centres and the common cell volume."""
        axes = []
        vol = 1.0
        for a, b, c in zip(self.lower, self.upper, self.counts):
            e = np.linspace(a, b, c)
            axes.append(0.5 * (e[:-1] + e[1:]))
            vol *= (b - a) / (c - 1)
        return self._lattice(axes), vol


@dataclass(frozen=True)
class AnalyticFunction:
    """Function with known partial derivatives, evaluated on batches ``(m, n_x)``.

    ``partials[i - 1]`` returns the derivative with respect to variable ``i``.
    """

    n_x: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    partials: Sequence[Callable[[np.ndarray], np.ndarray]]

    def __post_init__(self):
        if len(self.partials) != self.n_x:
            raise DimensionError(f"{len(self.partials)} partial derivatives for n_x={self.n_x}")

    def value(self, X) -> np.ndarray:
        return np.asarray(self.value_fn(np.asarray(X, dtype=float)), dtype=float).reshape(-1)

    def partial(self, X, i: int) -> np.ndarray:
        return np.asarray(self.partials[i - 1](np.asarray(X, dtype=float)), dtype=float).reshape(-1)

    def channel(self, X, i: int) -> np.ndarray:
        return self.value(X) if i == 0 else self.partial(X, i)


@dataclass(frozen=True)
class SobolevError:
    total: float
    per_channel: tuple[float, ...]
    p: float

    def to_dict(self) -> dict:
        return {"total": self.total, "per_channel": list(self.per_channel),
                "p": "inf" if self.p == math.inf else self.p}


def _channel(f, X, i):
    return f.value(X) if i == 0 else f.partial(X, i)


def sobolev_error(model, truth, grid: GridSpec, p=2) -> SobolevError:
    """Sum over channels of the grid ``L_p`` norm of ``truth^(i) - model^(i)``."""
    if p in ("inf", math.inf):
        p = math.inf
    elif p != 2:
        raise ValueError(f"p must be 2 or inf, got {p!r}")
    for f in (model, truth):
        if getattr(f, "n_x", grid.n_x) != grid.n_x:
            raise DimensionError(f"function has n_x={f.n_x}, grid has {grid.n_x}")
    if p == math.inf:
        X, vol = grid.nodes(), None
    else:
        X, vol = grid.midpoints()
    terms = []
    for i in range(grid.n_x + 1):
        diff = _channel(truth, X, i) - _channel(model, X, i)
        if p == math.inf:
            terms.append(float(np.max(np.abs(diff))))
        else:
            terms.append(math.sqrt(vol * float(diff @ diff)))
    return SobolevError(float(sum(terms)), tuple(terms), p)
