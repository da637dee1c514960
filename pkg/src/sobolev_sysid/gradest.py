"""Gradient samples from function samples by local linear least squares.

For every sample ``k`` the neighbours within radius ``rho`` are collected and
the gradient ``g_k`` solves ``min_g sum_j (z_j - z_k - g.(x_j - x_k))^2``.  The
estimates may then be smoothed along the sample index with a zero-phase
first-order filter, which only makes sense for trajectory data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from .data import Dataset
from .errors import RankDeficientError


@dataclass(frozen=True)
class GradEstConfig:
    """Neighbourhood and smoothing settings.

    Parameters
    ----------
    radius
        Neighbourhood radius in regressor units.  ``None`` uses
        ``radius_fraction`` times the diagonal of the data bounding box.
    min_neighbors
        Minimum neighbourhood size counting the point itself; ``None`` means
        ``n_x + 1``.
    smoothing
        Time constant (in samples) of the zero-phase smoother; 0 disables it.
    rank_tol
        Relative eigenvalue threshold on the local second-moment matrix.
    """

    radius: float | None = None
    radius_fraction: float = 0.05
    min_neighbors: int | None = None
    smoothing: float = 0.0
    rank_tol: float = 1e-10

    def __post_init__(self):
        if self.radius is not None and not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not self.radius_fraction > 0:
            raise ValueError(f"radius_fraction must be positive, got {self.radius_fraction}")
        if self.smoothing < 0:
            raise ValueError("smoothing time constant must be >= 0")
        if not 0 < self.rank_tol < 1:
            raise ValueError("rank_tol must lie in (0, 1)")

    def resolve_radius(self, x: np.ndarray) -> float:
        if self.radius is not None:
            return float(self.radius)
        diameter = float(np.linalg.norm(x.max(axis=0) - x.min(axis=0)))
        if diameter == 0:
            raise ValueError("all regressors coincide; set an explicit radius")
        return self.radius_fraction * diameter

    def resolve_min_neighbors(self, n_x: int) -> int:
        m = n_x + 1 if self.min_neighbors is None else int(self.min_neighbors)
        if m < n_x + 1:
            raise ValueError(f"min_neighbors must be >= n_x + 1 = {n_x + 1}, got {m}")
        return m


def neighbor_set(dataset: Dataset, k: int, radius: float) -> list[int]:
    """Indices ``j`` with ``||x_j - x_k||_2 <= radius`` in ascending order, ``k`` included.

    ``k`` is 0-based.
    """
    if not 0 <= k < dataset.L:
        raise IndexError(f"sample index {k} out of range 0..{dataset.L - 1}")
    # same distance test as the batched search in estimate_gradients
    idx = cKDTree(dataset.x).query_ball_point(dataset.x[k], radius, return_sorted=True)
    if k not in idx:
        idx = sorted(set(idx) | {k})
    return [int(j) for j in idx]


def _local_system(x, z, k, idx):
    return x[idx] - x[k], z[idx] - z[k]


def _check_rank(s, k, rank_tol):
    """``s`` are singular values of the local difference matrix."""
    if s.size == 0 or s[0] == 0:
        raise RankDeficientError(f"neighbourhood of sample {k} has no spread", k, math.inf)
    ratio = (s[-1] / s[0]) ** 2
    if ratio < rank_tol:
        raise RankDeficientError(
            f"neighbourhood of sample {k} is rank deficient (eigenvalue ratio {ratio:.3g} < {rank_tol:g}); "
            "increase the radius", k, 1.0 / ratio if ratio > 0 else math.inf)


def _local_gradient(P, d, k, rank_tol):
    U, s, Vt = np.linalg.svd(P, full_matrices=False)
    if s.shape[0] < P.shape[1]:
        raise RankDeficientError(f"neighbourhood of sample {k} has fewer points than dimensions", k, math.inf)
    _check_rank(s, k, rank_tol)
    return Vt.T @ ((U.T @ d) / s)


def _neighbourhoods(x, radius, m_min):
    tree = cKDTree(x)
    lists = tree.query_ball_point(x, radius, return_sorted=True)
    for k, idx in enumerate(lists):
        if len(idx) < m_min:
            raise RankDeficientError(
                f"sample {k} has {len(idx)} neighbours within radius {radius:.4g}; need {m_min}", k, math.inf)
    return lists


def estimate_gradients(dataset: Dataset, config: GradEstConfig | None = None) -> Dataset:
    """Copy of ``dataset`` with derivative channels filled by local linear fits.

    Raises
    ------
    RankDeficientError
        If a neighbourhood has fewer than ``min_neighbors`` points or its local
        second-moment matrix is numerically singular.
    """
    config = config or GradEstConfig()
    x, z = dataset.x, dataset.z
    radius = config.resolve_radius(x)
    m_min = config.resolve_min_neighbors(dataset.n_x)
    G = np.empty_like(x)
    for k, idx in enumerate(_neighbourhoods(x, radius, m_min)):
        P, d = _local_system(x, z, k, idx)
        G[k] = _local_gradient(P, d, k, config.rank_tol)
    if config.smoothing > 0:
        G = np.column_stack([smooth_sequence(G[:, i], config.smoothing) for i in range(G.shape[1])])
    return dataset.with_derivatives(G, "estimated")


def smooth_sequence(values, time_constant: float) -> np.ndarray:
    """Zero-phase first-order smoothing with unit DC gain.

    Solves ``(I + lam D'D) y = x`` with ``D`` the first-difference operator and
    ``lam = a / (1 - a)^2``, ``a = exp(-1 / time_constant)``.  In the interior
    this is the forward-backward cascade of ``y_t = a y_{t-1} + (1 - a) x_t``;
    at the ends it uses reflecting boundaries, so constants are fixed points
    and the sample mean is preserved exactly.
    """
    x = np.asarray(values, dtype=float).reshape(-1)
    if time_constant < 0:
        raise ValueError("time_constant must be >= 0")
    if time_constant == 0 or x.size < 2:
        return x.copy()
    a = math.exp(-1.0 / time_constant)
    lam = a / (1.0 - a) ** 2
    n = x.size
    ab = np.zeros((3, n))
    ab[0, 1:] = -lam
    ab[1, :] = 1.0 + 2.0 * lam
    ab[1, 0] = ab[1, -1] = 1.0 + lam
    ab[2, :-1] = -lam
    return linalg.solve_banded((1, 1), ab, x)


def local_difference_matrix(dataset: Dataset, k: int, config: GradEstConfig | None = None) -> np.ndarray:
    """Rows ``x_j - x_k`` over the neighbourhood of sample ``k`` (0-based)."""
    config = config or GradEstConfig()
    radius = config.resolve_radius(dataset.x)
    idx = neighbor_set(dataset, k, radius)
    m_min = config.resolve_min_neighbors(dataset.n_x)
    if len(idx) < m_min:
        raise RankDeficientError(f"sample {k} has {len(idx)} neighbours; need {m_min}", k, math.inf)
    return dataset.x[idx] - dataset.x[k]


def pinv_norm(P: np.ndarray, q=2, k: int | None = None, rank_tol: float = 1e-10) -> float:
    """Induced ``q``-norm of the pseudo-inverse of a full-column-rank ``P``."""
    U, s, Vt = np.linalg.svd(P, full_matrices=False)
    if s.shape[0] < P.shape[1]:
        raise RankDeficientError("fewer rows than columns", k, math.inf)
    _check_rank(s, k, rank_tol)
    if q == 2:
        return float(1.0 / s[-1])
    if q in (math.inf, "inf"):
        Pp = (Vt.T / s) @ U.T
        return float(np.max(np.sum(np.abs(Pp), axis=1)))
    raise ValueError(f"q must be 2 or inf, got {q!r}")


def gradient_error_bound_diagnostic(dataset: Dataset, k: int, config: GradEstConfig | None,
                                    mu0: float, q=2) -> float:
    """Noise part ``2 ||P_k^+||_q mu0`` of the local gradient error bound at sample ``k``.

    The Taylor-remainder contribution is unknown and omitted, so the value is
    informational only.
    """
    if mu0 < 0:
        raise ValueError("mu0 must be >= 0")
    config = config or GradEstConfig()
    P = local_difference_matrix(dataset, k, config)
    return 2.0 * pinv_norm(P, q, k, config.rank_tol) * mu0
