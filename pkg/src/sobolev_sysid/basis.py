"""Basis-function families with analytic first partial derivatives.

Every family exposes ``value(X)`` and ``partial(X, i)`` on a batch of points
``X`` of shape ``(m, n_x)``.  Variable indices ``i`` are 1-based so that
channel ``i`` of a dataset (0 = function value, i >= 1 = partial derivative
with respect to ``x_i``) maps directly onto ``partial(X, i)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError


def _check_variable(i: int, n_x: int) -> None:
    if not 1 <= i <= n_x:
        raise DimensionError(f"variable index {i} out of range 1..{n_x}")


@dataclass(frozen=True)
class Monomial:
    """``prod_i x_i ** exponents[i]``."""

    exponents: tuple[int, ...]

    family = "monomial"

    @property
    def n_x(self) -> int:
        return len(self.exponents)

    def value(self, X: np.ndarray) -> np.ndarray:
        out = np.ones(X.shape[0])
        for i, e in enumerate(self.exponents):
            if e:
                out = out * X[:, i] ** e
        return out

    def partial(self, X: np.ndarray, i: int) -> np.ndarray:
        _check_variable(i, self.n_x)
        e_i = self.exponents[i - 1]
        if e_i == 0:
            return np.zeros(X.shape[0])
        out = np.full(X.shape[0], float(e_i))
        for j, e in enumerate(self.exponents):
            p = e - 1 if j == i - 1 else e
            if p:
                out = out * X[:, j] ** p
        return out

    def to_dict(self) -> dict:
        return {"family": self.family, "exponents": list(self.exponents)}


@dataclass(frozen=True)
class Gaussian:
    """Isotropic radial basis function ``exp(-|x - c|^2 / (2 w^2))``."""

    center: tuple[float, ...]
    width: float

    family = "gaussian"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("Gaussian width must be positive")

    @property
    def n_x(self) -> int:
        return len(self.center)

    def value(self, X):
        d = X - np.asarray(self.center)
        return np.exp(-0.5 * np.sum(d * d, axis=1) / self.width**2)

    def partial(self, X, i):
        _check_variable(i, self.n_x)
        d = X[:, i - 1] - self.center[i - 1]
        return -d / self.width**2 * self.value(X)

    def to_dict(self):
        return {"family": self.family, "center": list(self.center), "width": self.width}


@dataclass(frozen=True)
class Trigonometric:
    """Plane wave ``sin(w . x + phase)``; use ``phase = pi/2`` for a cosine."""

    frequency: tuple[float, ...]
    phase: float = 0.0

    family = "trig"

    @property
    def n_x(self) -> int:
        return len(self.frequency)

    def value(self, X):
        return np.sin(X @ np.asarray(self.frequency) + self.phase)

    def partial(self, X, i):
        _check_variable(i, self.n_x)
        w = np.asarray(self.frequency)
        return w[i - 1] * np.cos(X @ w + self.phase)

    def to_dict(self):
        return {"family": self.family, "frequency": list(self.frequency), "phase": self.phase}


FAMILIES = {
    "monomial": lambda d: Monomial(tuple(int(e) for e in d["exponents"])),
    "gaussian": lambda d: Gaussian(tuple(float(c) for c in d["center"]), float(d["width"])),
    "trig": lambda d: Trigonometric(
        tuple(float(w) for w in d["frequency"]), float(d.get("phase", 0.0))
    ),
}


def function_from_dict(d: dict):
    try:
        return FAMILIES[d["family"]](d)
    except KeyError as exc:
        raise ValueError(f"unknown or incomplete basis descriptor {d!r}") from exc


class BasisSet:
    """Immutable ordered collection of basis functions over ``R^n_x``.

    When every member is a :class:`Monomial`, design matrices are built from a
    table of per-variable powers instead of one column at a time.
    """

    def __init__(self, functions: Sequence, n_x: int | None = None):
        functions = tuple(functions)
        if not functions:
            raise ValueError("a basis set needs at least one function")
        dims = {f.n_x for f in functions}
        if len(dims) != 1:
            raise DimensionError(f"basis functions disagree on input dimension: {sorted(dims)}")
        (dim,) = dims
        if n_x is not None and n_x != dim:
            raise DimensionError(f"n_x={n_x} but functions have dimension {dim}")
        self._functions = functions
        self._n_x = dim
        if all(isinstance(f, Monomial) for f in functions):
            E = np.array([f.exponents for f in functions], dtype=int)
            E.setflags(write=False)
            self._exponents = E
        else:
            self._exponents = None

    @property
    def n_x(self) -> int:
        return self._n_x

    @property
    def functions(self) -> tuple:
        return self._functions

    @property
    def exponents(self) -> np.ndarray | None:
        """``(N, n_x)`` exponent table for all-monomial sets, else ``None``."""
        return self._exponents

    def __len__(self) -> int:
        return len(self._functions)

    def __iter__(self):
        return iter(self._functions)

    def __getitem__(self, j):
        return self._functions[j]

    def __eq__(self, other):
        return isinstance(other, BasisSet) and self._functions == other._functions

    def __hash__(self):
        return hash(self._functions)

    def __repr__(self):
        return f"BasisSet(N={len(self)}, n_x={self.n_x})"

    def _points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and self.n_x == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] != self.n_x:
            raise DimensionError(f"expected points of shape (m, {self.n_x}), got {X.shape}")
        return X

    def _power_table(self, X):
        """``P[i][:, e] = X[:, i] ** e`` for ``e`` up to the largest exponent used."""
        emax = int(self._exponents.max())
        return [X[:, [i]] ** np.arange(emax + 1) for i in range(self.n_x)]

    def design(self, X) -> np.ndarray:
        """``(m, N)`` matrix of basis values at the rows of ``X``."""
        X = self._points(X)
        if self._exponents is None:
            return np.column_stack([f.value(X) for f in self._functions])
        E = self._exponents
        P = self._power_table(X)
        out = np.ones((X.shape[0], len(self)))
        for i in range(self.n_x):
            if E[:, i].any():
                out *= P[i][:, E[:, i]]
        return out

    def design_partial(self, X, i: int) -> np.ndarray:
        """``(m, N)`` matrix of partial derivatives with respect to variable ``i``."""
        _check_variable(i, self.n_x)
        X = self._points(X)
        if self._exponents is None:
            return np.column_stack([f.partial(X, i) for f in self._functions])
        E = self._exponents
        P = self._power_table(X)
        e_i = E[:, i - 1]
        out = np.zeros((X.shape[0], len(self)))
        live = e_i > 0
        if not live.any():
            return out
        cols = np.ones((X.shape[0], int(live.sum()))) * e_i[live]
        for j in range(self.n_x):
            p = E[live, j] - (1 if j == i - 1 else 0)
            if p.any():
                cols *= P[j][:, p]
        out[:, live] = cols
        return out

    def to_list(self) -> list[dict]:
        return [f.to_dict() for f in self._functions]

    @classmethod
    def from_list(cls, descriptors: Sequence[dict]) -> "BasisSet":
        return cls([function_from_dict(d) for d in descriptors])


def monomial_basis(n_x: int, max_degree: int | Sequence[int]) -> BasisSet:
    """Full tensor product of monomials ``prod x_i ** e_i`` with ``0 <= e_i <= max_degree[i]``.

    Exponent vectors are enumerated in lexicographic order (the order of
    ``itertools.product``), so the constant term comes first.

    >>> [f.exponents for f in monomial_basis(2, 1)]
    [(0, 0), (0, 1), (1, 0), (1, 1)]
    """
    if int(n_x) != n_x or n_x < 1:
        raise ValueError(f"n_x must be a positive integer, got {n_x!r}")
    if np.ndim(max_degree) == 0:
        bounds = [int(max_degree)] * n_x
    else:
        bounds = [int(b) for b in max_degree]
        if len(bounds) != n_x:
            raise DimensionError(f"{len(bounds)} exponent bounds for n_x={n_x}")
    if any(b < 0 for b in bounds):
        raise ValueError(f"exponent bounds must be non-negative, got {bounds}")
    exps = itertools.product(*(range(b + 1) for b in bounds))
    return BasisSet([Monomial(tuple(e)) for e in exps])


def _single_point(basis: BasisSet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != basis.n_x:
        raise DimensionError(f"point has length {x.shape[0]}, basis expects {basis.n_x}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point contains non-finite entries")
    return x[None, :]


def eval_basis(basis: BasisSet, x) -> np.ndarray:
    """Vector ``(phi_1(x), ..., phi_N(x))`` at a single point."""
    return basis.design(_single_point(basis, x))[0]


def eval_basis_derivative(basis: BasisSet, x, i: int) -> np.ndarray:
    """Vector of partial derivatives ``d phi_j / d x_i`` at a single point (``i`` is 1-based)."""
    _check_variable(i, basis.n_x)
    return basis.design_partial(_single_point(basis, x), i)[0]
