"""Convex solvers for the two identification problems.

``solve_regularized`` minimizes ``sum_i w_i ||z_i - Phi_i a||_2^2 + lam ||a||_r``
with an accelerated proximal-gradient method (monotone restart, backtracking)
followed by an active-set refinement that is accepted only if it passes the
optimality conditions.

``solve_constrained_minnorm`` minimizes ``||a||_r`` subject to
``||z_i - Phi_i a||_q <= mu_i`` by ADMM, splitting the coefficient vector and
every constraint block into separate variables so each update is a closed-form
prox or ball projection.  Because ADMM has a slow tail on degenerate problems,
candidate points (a vertex snap for linear programs, an SLSQP solve of a smooth
reformulation otherwise) are tried along the way and accepted only with a
weak-duality certificate.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

from .errors import DimensionError, InfeasibleError

log = logging.getLogger(__name__)

# Constraint-satisfaction slack used everywhere a ball membership is checked.
FEAS_REL = 1e-6
FEAS_ABS = 1e-9
# Relative duality gap accepted from a polished candidate.
POLISH_GAP = 1e-7
# A constraint counts as active within this relative distance of its bound.
ACTIVE_REL = 1e-6
# Largest number of scalar constraints handed to the smooth polish.
SMOOTH_POLISH_ROWS = 4000


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 50000
    tol: float = 1e-9
    penalty: float = 1.0
    adapt_penalty: bool = True
    square_penalty: bool = False
    plateau_window: int = 1000
    polish: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.penalty > 0:
            raise ValueError("penalty must be positive")
        if self.plateau_window < 1:
            raise ValueError("plateau_window must be >= 1")


@dataclass
class SolveReport:
    alpha: np.ndarray
    objective: float
    residuals: tuple[float, ...]
    iterations: int
    converged: bool
    status: str = "converged"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "objective": float(self.objective),
            "residuals": [float(r) for r in self.residuals],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "status": self.status,
            **self.extra,
        }


def normalize_q(q) -> float:
    if isinstance(q, str):
        q = q.strip().lower()
        if q in ("inf", "infinity"):
            return math.inf
        q = float(q)
    q = float(q)
    if q not in (2.0, math.inf):
        raise ValueError(f"norm must be 2 or inf, got {q}")
    return q


def normalize_r(r) -> int:
    if r not in (1, 2):
        raise ValueError(f"penalty norm must be 1 or 2, got {r!r}")
    return int(r)


def vector_norm(v, q) -> float:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0
    return float(np.max(np.abs(v))) if q == math.inf else float(np.linalg.norm(v, q))


def within_ball(residual_norm: float, radius: float) -> bool:
    return residual_norm <= radius * (1 + FEAS_REL) + FEAS_ABS


def project_ball(v, radius: float, q) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{w : ||w||_q <= radius}``."""
    q = normalize_q(q)
    if not radius >= 0 or not math.isfinite(radius):
        raise ValueError(f"radius must be finite and non-negative, got {radius}")
    v = np.asarray(v, dtype=float)
    if q == math.inf:
        return np.clip(v, -radius, radius)
    nrm = np.linalg.norm(v)
    if nrm <= radius:
        return v.copy()
    return v * (radius / nrm)


def _prox(v, t, r, square):
    """Prox of ``t * ||.||_r`` (or ``t * ||.||_2^2`` when ``square``)."""
    if square:
        return v / (1.0 + 2.0 * t)
    if r == 1:
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    nrm = np.linalg.norm(v)
    if nrm <= t:
        return np.zeros_like(v)
    return v * (1.0 - t / nrm)


def _penalty(a, r, square):
    if square:
        return float(a @ a)
    return float(np.sum(np.abs(a))) if r == 1 else float(np.linalg.norm(a))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("solver input contains NaN or Inf")


class _Quadratic:
    """``f(a) = a'Ha - 2c'a + k`` accumulated block by block."""

    def __init__(self, N):
        self.H = np.zeros((N, N))
        self.c = np.zeros(N)
        self.k = 0.0

    def add(self, w, Phi, z):
        if w == 0:
            return
        self.H += w * (Phi.T @ Phi)
        self.c += w * (Phi.T @ z)
        self.k += w * float(z @ z)

    def value(self, a):
        return float(a @ (self.H @ a) - 2.0 * self.c @ a + self.k)

    def grad(self, a):
        return 2.0 * (self.H @ a - self.c)


def _max_eig(H):
    if H.shape[0] <= 600:
        return float(linalg.eigvalsh(H, subset_by_index=[H.shape[0] - 1, H.shape[0] - 1])[0])
    v = np.random.default_rng(0).standard_normal(H.shape[0])
    lam = 0.0
    for _ in range(200):
        w = H @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        if abs(nrm - lam) <= 1e-6 * nrm:
            lam = nrm
            break
        lam = nrm
    # power iteration underestimates; backtracking corrects any remainder
    return 1.05 * lam


def _polish(Q, lam, r, square, x):
    """Exact minimizer consistent with the support/sign pattern of ``x``, or ``None``."""
    N = Q.c.shape[0]
    if square:
        return linalg.solve(Q.H + lam * np.eye(N), Q.c, assume_a="sym")
    if lam == 0:
        a, *_ = linalg.lstsq(Q.H, Q.c, cond=None)
        return a
    if r == 2:
        return _exact_group_lasso(Q, lam)
    S = np.flatnonzero(x)
    a = np.zeros(N)
    if S.size:
        s = np.sign(x[S])
        try:
            aS = linalg.solve(Q.H[np.ix_(S, S)], Q.c[S] - 0.5 * lam * s, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            return None
        if not np.all(np.sign(aS) == s):
            return None
        a[S] = aS
    g = Q.grad(a)
    scale = np.max(np.abs(Q.H)) * np.sum(np.abs(a)) + np.max(np.abs(Q.c)) + lam
    slack = 1e-9 * scale
    off = np.ones(N, bool)
    off[S] = False
    if np.any(np.abs(g[off]) > lam + slack):
        return None
    if S.size and np.any(np.abs(g[S] + lam * np.sign(a[S])) > slack):
        return None
    return a


def _exact_group_lasso(Q, lam):
    """Minimizer of ``f(a) + lam ||a||_2`` via the secular equation on ``H``'s spectrum."""
    if 2.0 * np.linalg.norm(Q.c) <= lam:
        return np.zeros_like(Q.c)
    w, V = linalg.eigh(Q.H)
    w = np.maximum(w, 0.0)
    cc = 2.0 * (V.T @ Q.c)

    def phi(s):
        return np.linalg.norm(cc * (s / (2.0 * w + s))) - lam

    hi = lam * 2.0 * max(w.max(), 1e-300) / (np.linalg.norm(cc) - lam) * 2.0 + 1.0
    while phi(hi) < 0:
        hi *= 2.0
    s = optimize.brentq(phi, 1e-300, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return V @ (cc / (2.0 * w + s))


def _regularized_block(w, Phi, z):
    Phi = np.asarray(Phi, dtype=float)
    z = np.asarray(z, dtype=float).reshape(-1)
    if Phi.ndim != 2 or Phi.shape[0] != z.shape[0]:
        raise DimensionError(f"block matrix {Phi.shape} does not match vector of length {z.shape[0]}")
    if not (w >= 0 and math.isfinite(w)):
        raise ValueError(f"block weight must be finite and >= 0, got {w}")
    _check_finite(Phi, z)
    return float(w), Phi, z


def solve_regularized(blocks: Sequence, penalty: float, penalty_norm: int = 1,
                      config: SolverConfig | None = None) -> SolveReport:
    """Minimize ``sum_i w_i ||z_i - Phi_i a||_2^2 + penalty * ||a||_r``.

    ``blocks`` is a sequence of ``(w_i, Phi_i, z_i)``; it is traversed twice
    (Gram accumulation, then residual recomputation) so it may be a lazy
    sequence that rebuilds each matrix on access.  Non-convergence is
    reported through ``converged=False`` plus a warning.
    """
    config = config or SolverConfig()
    r = normalize_r(penalty_norm)
    if not (penalty >= 0 and math.isfinite(penalty)):
        raise ValueError(f"penalty must be finite and >= 0, got {penalty}")
    if config.square_penalty and r != 2:
        raise ValueError("square_penalty is only defined for the 2-norm penalty")
    lam = float(penalty)
    square = config.square_penalty

    Q = None
    for item in blocks:
        w, Phi, z = _regularized_block(*item)
        if Q is None:
            Q = _Quadratic(Phi.shape[1])
        elif Phi.shape[1] != Q.c.shape[0]:
            raise DimensionError("all blocks must share the same number of columns")
        Q.add(w, Phi, z)
    if Q is None:
        raise ValueError("at least one block is required")

    x, iters, converged, info = _fista(Q, lam, r, square, config)

    residuals = []
    fit = 0.0
    for w, Phi, z in blocks:
        res = np.linalg.norm(np.asarray(z, float) - np.asarray(Phi, float) @ x)
        residuals.append(float(res))
        fit += float(w) * res**2
    objective = fit + lam * _penalty(x, r, square)
    status = "converged" if converged else "max_iterations"
    if not converged:
        warnings.warn(f"solve_regularized stopped after {iters} iterations without converging",
                      RuntimeWarning, stacklevel=2)
    return SolveReport(x, objective, tuple(residuals), iters, converged, status, info)


def _fista(Q, lam, r, square, config):
    N = Q.c.shape[0]
    Lf = 2.0 * _max_eig(Q.H)
    if not Lf > 0:
        Lf = 1.0

    def F(a):
        return Q.value(a) + lam * _penalty(a, r, square)

    x = np.zeros(N)
    Fx = F(x)
    y = x.copy()
    t = 1.0
    restarts = 0
    just_restarted = False
    polish_every = 25
    converged = False
    method = "fista"
    it = 0
    for it in range(1, config.max_iterations + 1):
        fy = Q.value(y)
        gy = Q.grad(y)
        while True:
            xn = _prox(y - gy / Lf, lam / Lf, r, square)
            d = xn - y
            if Q.value(xn) <= fy + gy @ d + 0.5 * Lf * (d @ d) + 1e-13 * (abs(fy) + 1.0):
                break
            Lf *= 2.0
        Fn = F(xn)
        if Fn > Fx + 1e-15 * (abs(Fx) + 1.0):
            if just_restarted:
                converged = True
                break
            y = x.copy()
            t = 1.0
            restarts += 1
            just_restarted = True
            continue
        just_restarted = False
        step = np.linalg.norm(xn - x)
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = xn + ((t - 1.0) / tn) * (xn - x)
        x, Fx, t = xn, Fn, tn
        if step <= config.tol * max(1.0, np.linalg.norm(x)):
            converged = True
            break
        if config.polish and (it % polish_every == 0 or it == 1):
            cand = _polish(Q, lam, r, square, x)
            if cand is not None and F(cand) <= Fx + 1e-12 * (abs(Fx) + 1.0):
                x = cand
                converged = True
                method = "fista+polish"
                break
            polish_every = min(2 * polish_every, 1000) if it > 200 else polish_every
    if config.polish and method == "fista":
        cand = _polish(Q, lam, r, square, x)
        if cand is not None and F(cand) <= F(x) + 1e-12 * (abs(F(x)) + 1.0):
            x = cand
            converged = True
            method = "fista+polish"
    log.debug("fista: %d iterations, %d restarts, %s", it, restarts, method)
    return x, it, converged, {"restarts": restarts, "method": method}


def _phase_one(raw, q, N):
    """Return a point minimizing constraint violation, or ``None`` if the solve fails.

    For ``q = inf`` this is the linear program ``min t`` subject to
    ``|z - Phi a| <= mu + t`` elementwise.  For ``q = 2`` the sum of squared
    distances of the block residuals to their balls is minimized; it is convex
    and continuously differentiable, and vanishes exactly on the feasible set.
    """
    if q == math.inf:
        rows, lo, hi = [], [], []
        for Phi, z, mu in raw:
            rows.append(Phi)
            lo.append(z - mu)
            hi.append(z + mu)
        A = np.vstack(rows)
        lo = np.concatenate(lo)
        hi = np.concatenate(hi)
        ones = np.ones((A.shape[0], 1))
        # Phi a - t <= z + mu  and  -Phi a - t <= -(z - mu)
        A_ub = np.block([[A, -ones], [-A, -ones]])
        b_ub = np.concatenate([hi, -lo])
        c = np.zeros(N + 1)
        c[-1] = 1.0
        res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * N + [(0, None)],
                               method="highs")
        return res.x[:N] if res.status == 0 else None

    def fun(a):
        f = 0.0
        g = np.zeros(N)
        for Phi, z, mu in raw:
            e = Phi @ a - z
            n = np.linalg.norm(e)
            if n > mu:
                f += (n - mu) ** 2
                g += 2.0 * (n - mu) / n * (Phi.T @ e)
        return f, g

    a0 = np.linalg.lstsq(np.vstack([b[0] for b in raw]), np.concatenate([b[1] for b in raw]), rcond=None)[0]
    res = optimize.minimize(fun, a0, jac=True, method="L-BFGS-B",
                            options={"maxiter": 10000, "ftol": 1e-30, "gtol": 1e-14})
    return res.x


def _certify(blocks, q, r, square, a, gap_tol):
    """Return True when ``a`` is optimal for the min-norm problem up to ``gap_tol``.

    Multipliers for the active constraints are recovered by non-negative least
    squares on the stationarity conditions at ``a``; after rescaling they are
    dual feasible, so the dual value is a lower bound on the optimum
    (weak duality).  ``blocks`` holds ``(A_j, z_j, mu_j)`` and ``a`` must
    already satisfy every constraint.
    """
    N = a.shape[0]
    amax = float(np.max(np.abs(a))) if N else 0.0
    primal = _penalty(a, r, square)
    if amax == 0.0:
        return True
    cols, parts = [], []
    for j, (Aj, zj, mu) in enumerate(blocks):
        e = Aj @ a - zj
        if q == math.inf:
            for k in np.flatnonzero(np.abs(e) >= mu * (1 - ACTIVE_REL) - FEAS_ABS):
                sgn = 1.0 if e[k] >= 0 else -1.0
                cols.append(sgn * Aj[k])
                parts.append((j, k, sgn))
        else:
            n = float(np.linalg.norm(e))
            if n > 0 and n >= mu * (1 - ACTIVE_REL) - FEAS_ABS:
                cols.append(Aj.T @ (e / n))
                parts.append((j, None, e / n))
    if square:
        target, rows = -2.0 * a, slice(None)
    elif r == 1:
        rows = np.abs(a) > 1e-6 * amax
        target = -np.sign(a[rows])
    else:
        target, rows = -a / np.linalg.norm(a), slice(None)
    if not cols:
        return False
    G = np.column_stack(cols)[rows]
    lam, _ = optimize.nnls(G, target, maxiter=50 * G.shape[1] + 50)
    y = [np.zeros(Aj.shape[0]) for Aj, _, _ in blocks]
    for weight, (j, k, d) in zip(lam, parts):
        if k is None:
            y[j] = y[j] + weight * d
        else:
            y[j][k] += weight * d
    s = sum(Aj.T @ yj for (Aj, _, _), yj in zip(blocks, y))
    dual_q = 1 if q == math.inf else 2
    if square:
        dual = -float(s @ s) / 4.0
    else:
        scale = max(1.0, vector_norm(s, math.inf if r == 1 else 2))
        y = [yj / scale for yj in y]
        dual = 0.0
    dual -= sum(float(yj @ zj) + mu * vector_norm(yj, dual_q) for (_, zj, mu), yj in zip(blocks, y))
    return primal - dual <= gap_tol * max(1.0, primal)


def _vertex_candidates(A, zs, mu_rows, v, y):
    """Vertices of ``|A a - z| <= mu`` suggested by an approximate primal-dual pair.

    The support is read from ``v`` and the active rows and their sides from
    the dual estimate ``y``; each candidate solves the resulting equality
    system.
    """
    vmax = float(np.max(np.abs(v)))
    ymax = float(np.max(np.abs(y)))
    if ymax == 0.0:
        return
    for thr in (1e-6, 1e-4, 1e-2):
        support = np.abs(v) > thr * vmax if vmax > 0 else np.zeros(v.shape[0], dtype=bool)
        act = np.abs(y) > thr * ymax
        a = np.zeros(v.shape[0])
        if np.any(support):
            rhs = zs[act] + mu_rows[act] * np.sign(y[act])
            a[support] = np.linalg.lstsq(A[np.ix_(act, support)], rhs, rcond=None)[0]
        yield a


def _smooth_candidate(blocks, q, r, x0):
    """Solve a smooth reformulation with SLSQP, warm-started at ``x0``.

    For ``r = 1`` the coefficients are split into non-negative parts so the
    objective is linear; otherwise the squared norm is minimized, which has
    the same minimizer.
    """
    N = x0.shape[0]
    split = r == 1
    if split:
        def unpack(u):
            return u[:N] - u[N:]

        J = np.hstack([np.eye(N), -np.eye(N)])
        u0 = np.concatenate([np.maximum(x0, 0), np.maximum(-x0, 0)])
        fun, jac = (lambda u: float(np.sum(u))), (lambda u: np.ones(2 * N))
        bounds = [(0, None)] * (2 * N)
    else:
        def unpack(u):
            return u

        J = np.eye(N)
        u0 = x0.copy()
        fun, jac = (lambda u: float(u @ u)), (lambda u: 2.0 * u)
        bounds = None
    cons = []
    for Aj, zj, mu in blocks:
        if q == math.inf:
            AJ = Aj @ J
            cons.append({"type": "ineq", "fun": lambda u, Aj=Aj, zj=zj, mu=mu: mu - (Aj @ unpack(u) - zj),
                         "jac": lambda u, AJ=AJ: -AJ})
            cons.append({"type": "ineq", "fun": lambda u, Aj=Aj, zj=zj, mu=mu: mu + (Aj @ unpack(u) - zj),
                         "jac": lambda u, AJ=AJ: AJ})
        else:
            cons.append({"type": "ineq",
                         "fun": lambda u, Aj=Aj, zj=zj, mu=mu: mu * mu - float(np.sum((Aj @ unpack(u) - zj) ** 2)),
                         "jac": lambda u, Aj=Aj, zj=zj: -2.0 * ((Aj @ unpack(u) - zj) @ Aj) @ J})
    res = optimize.minimize(fun, u0, jac=jac, bounds=bounds, constraints=cons, method="SLSQP",
                            options={"maxiter": 500, "ftol": 1e-15})
    a = unpack(res.x)
    if split:
        a[np.abs(a) <= 1e-12 * max(1.0, float(np.max(np.abs(a))))] = 0.0
    return a


def solve_constrained_minnorm(blocks: Sequence, constraint_norm=2, objective_norm: int = 1,
                              config: SolverConfig | None = None) -> SolveReport:
    """Minimize ``||a||_r`` subject to ``||z_i - Phi_i a||_q <= mu_i`` for every block.

    ``blocks`` is a sequence of ``(Phi_i, z_i, mu_i)``.  Raises
    :class:`InfeasibleError` when the primal residual plateaus above tolerance
    (a heuristic signal: no iterate got closer to the constraint set during
    ``config.plateau_window`` iterations).  A plateau is confirmed by a direct
    feasibility solve before the error is raised; slow but feasible problems
    keep iterating.
    """
    config = config or SolverConfig()
    q = normalize_q(constraint_norm)
    r = normalize_r(objective_norm)
    if config.square_penalty and r != 2:
        raise ValueError("square_penalty is only defined for the 2-norm objective")
    square = config.square_penalty

    raw = []
    N = None
    for Phi, z, mu in blocks:
        Phi = np.asarray(Phi, dtype=float)
        z = np.asarray(z, dtype=float).reshape(-1)
        if Phi.ndim != 2 or Phi.shape[0] != z.shape[0]:
            raise DimensionError(f"block matrix {Phi.shape} does not match vector of length {z.shape[0]}")
        if N is None:
            N = Phi.shape[1]
        elif Phi.shape[1] != N:
            raise DimensionError("all blocks must share the same number of columns")
        mu = float(mu)
        if not (mu >= 0 and math.isfinite(mu)):
            raise ValueError(f"radius must be finite and >= 0, got {mu}")
        _check_finite(Phi, z)
        raw.append((Phi, z, mu))
    if N is None:
        raise ValueError("at least one block is required")

    def original_residuals(a):
        return tuple(vector_norm(z - Phi @ a, q) for Phi, z, _ in raw)

    # Blocks with an all-zero matrix constrain nothing but the data.
    active = []
    for j, (Phi, z, mu) in enumerate(raw):
        if not np.any(Phi):
            if not within_ball(vector_norm(z, q), mu):
                a0 = np.zeros(N)
                rep = SolveReport(a0, _penalty(a0, r, square), original_residuals(a0), 0, False, "infeasible")
                raise InfeasibleError(f"block {j} has a zero matrix and its data violate the bound", rep)
            continue
        scale = 1.0 / np.linalg.norm(Phi, 2)
        active.append((Phi * scale, z * scale, mu * scale))

    if not active:
        a0 = np.zeros(N)
        return SolveReport(a0, 0.0, original_residuals(a0), 0, True, "converged", {"penalty": config.penalty})

    A = np.vstack([b[0] for b in active])
    zs = np.concatenate([b[1] for b in active])
    sizes = [b[0].shape[0] for b in active]
    bounds = np.cumsum([0] + sizes)
    radii = [b[2] for b in active]
    m = A.shape[0]
    vertex_polish = config.polish and q == math.inf and r == 1 and not square
    smooth_polish = config.polish and (q == 2 or m <= SMOOTH_POLISH_ROWS)
    mu_rows = np.repeat(radii, sizes) if vertex_polish else None

    def polished(candidate):
        return feasible(candidate) and _certify(active, q, r, square, candidate, POLISH_GAP)
    chol = linalg.cho_factor(np.eye(N) + A.T @ A)

    def project_all(vw):
        out = np.empty_like(vw)
        for j in range(len(active)):
            s = slice(bounds[j], bounds[j + 1])
            out[s] = project_ball(vw[s], radii[j], q)
        return out

    def feasible(a):
        res = original_residuals(a)
        return all(within_ball(rj, mu) for rj, (_, _, mu) in zip(res, raw))

    rho = config.penalty
    x = np.zeros(N)
    v = np.zeros(N)
    w = project_all(-zs)
    uv = np.zeros(N)
    uw = np.zeros(m)
    eps_abs = config.tol
    best = math.inf
    since_best = 0
    plateau_checked = False
    next_adapt = 10
    next_smooth = 500
    converged = False
    status = "max_iterations"
    it = 0
    for it in range(1, config.max_iterations + 1):
        x = linalg.cho_solve(chol, (v - uv) + A.T @ (zs + w - uw))
        Ax = A @ x
        v_old, w_old = v, w
        v = _prox(x + uv, 1.0 / rho, r, square)
        w = project_all(Ax - zs + uw)
        rv = x - v
        rw = Ax - zs - w
        uv += rv
        uw += rw
        r_prim = math.sqrt(rv @ rv + rw @ rw)
        r_dual = rho * np.linalg.norm((v - v_old) + A.T @ (w - w_old))
        eps_prim = math.sqrt(N + m) * eps_abs + config.tol * max(
            math.sqrt(x @ x + Ax @ Ax), math.sqrt(v @ v + np.sum((w + zs) ** 2)))
        eps_dual = math.sqrt(N) * eps_abs + config.tol * rho * np.linalg.norm(uv + A.T @ uw)
        if r_prim <= eps_prim and r_dual <= eps_dual and feasible(x):
            converged = True
            status = "converged"
            break
        # ADMM has a slow tail on degenerate or ill-conditioned problems;
        # finish early whenever a candidate passes the duality-gap certificate
        candidate = None
        if vertex_polish and it % 100 == 0:
            candidate = next((c for c in _vertex_candidates(A, zs, mu_rows, v, rho * uw) if polished(c)), None)
        if candidate is None and smooth_polish and it == next_smooth:
            next_smooth *= 2
            c = _smooth_candidate(active, q, r, v)
            candidate = c if polished(c) else None
        if candidate is not None:
            x = candidate
            converged = True
            status = "converged"
            break
        if r_prim < best * (1 - 1e-3):
            best = r_prim
            since_best = 0
        else:
            since_best += 1
        if since_best >= config.plateau_window and r_prim > max(100 * eps_prim, 1e-7):
            if plateau_checked:
                since_best = 0
            else:
                plateau_checked = True
                witness = _phase_one(raw, q, N)
                if witness is None or not feasible(witness):
                    status = "infeasible"
                    break
                log.debug("residual plateau at iteration %d but the constraints are feasible", it)
                since_best = 0
        # geometric schedule so the penalty cannot cycle indefinitely
        if config.adapt_penalty and it == next_adapt:
            next_adapt = int(next_adapt * 1.5) + 1
            if r_prim > 10 * r_dual and rho < 1e6:
                rho *= 2.0
                uv /= 2.0
                uw /= 2.0
            elif r_dual > 10 * r_prim and rho > 1e-6:
                rho /= 2.0
                uv *= 2.0
                uw *= 2.0

    if status == "max_iterations" and smooth_polish:
        c = _smooth_candidate(active, q, r, v)
        if polished(c):
            x, converged, status = c, True, "converged"
    res = original_residuals(x)
    report = SolveReport(x, _penalty(x, r, square), res, it, converged, status,
                         {"penalty": rho, "primal_residual": r_prim, "dual_residual": r_dual})
    if status == "infeasible":
        raise InfeasibleError(
            f"constraint residuals stalled at {r_prim:.3e} for {config.plateau_window} iterations", report, res)
    if not converged:
        warnings.warn(f"solve_constrained_minnorm stopped after {it} iterations without converging",
                      RuntimeWarning, stacklevel=2)
    return report
