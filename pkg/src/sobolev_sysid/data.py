"""Datasets, stacked regression blocks and regressor rescaling."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .basis import BasisSet
from .errors import DimensionError, MissingChannelError

PROVENANCES = ("measured", "estimated", "analytic")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Samples ``(x_k, z_k, dz_k)`` of a function and optionally its gradient.

    ``x`` has shape ``(L, n_x)``, ``z`` shape ``(L,)`` and ``dz`` (when
    present) shape ``(L, n_x)`` with column ``i - 1`` holding channel ``i``.
    """

    x: np.ndarray
    z: np.ndarray
    dz: np.ndarray | None = None
    provenance: str = "measured"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] < 1:
            raise DimensionError(f"x must be a non-empty (L, n_x) array, got shape {x.shape}")
        if z.shape[0] != x.shape[0]:
            raise DimensionError(f"{x.shape[0]} regressor samples but {z.shape[0]} outputs")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "z", _frozen(z))
        if self.dz is not None:
            dz = np.asarray(self.dz, dtype=float)
            if dz.ndim == 1 and x.shape[1] == 1:
                dz = dz[:, None]
            if dz.shape != x.shape:
                raise DimensionError(
                    f"derivative samples must have shape {x.shape} (one column per variable), got {dz.shape}"
                )
            object.__setattr__(self, "dz", _frozen(dz))
        arrays = [self.x, self.z] + ([self.dz] if self.dz is not None else [])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("dataset contains non-finite values")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")

    @property
    def L(self) -> int:
        return self.x.shape[0]

    @property
    def n_x(self) -> int:
        return self.x.shape[1]

    @property
    def has_derivatives(self) -> bool:
        return self.dz is not None

    def channel(self, i: int) -> np.ndarray:
        """Samples of channel ``i`` (0 = function value)."""
        if i == 0:
            return self.z
        if not 1 <= i <= self.n_x:
            raise DimensionError(f"channel {i} out of range 0..{self.n_x}")
        if self.dz is None:
            raise MissingChannelError(f"dataset has no derivative samples (channel {i} requested)")
        return self.dz[:, i - 1]

    def with_derivatives(self, dz, provenance: str = "estimated") -> "Dataset":
        return Dataset(self.x, self.z, dz, provenance)

    def without_derivatives(self) -> "Dataset":
        return Dataset(self.x, self.z, None, self.provenance)

    def subset(self, idx) -> "Dataset":
        dz = None if self.dz is None else self.dz[idx]
        return Dataset(self.x[idx], self.z[idx], dz, self.provenance)

    def header(self) -> list[str]:
        cols = [f"x{i}" for i in range(1, self.n_x + 1)] + ["z"]
        if self.dz is not None:
            cols += [f"dz{i}" for i in range(1, self.n_x + 1)]
        return cols

    def to_array(self) -> np.ndarray:
        parts = [self.x, self.z[:, None]]
        if self.dz is not None:
            parts.append(self.dz)
        return np.hstack(parts)


def write_csv(dataset: Dataset, path) -> None:
    """Write ``x1..xn,z[,dz1..dzn]`` with 17 significant digits."""
    buf = io.StringIO()
    np.savetxt(buf, dataset.to_array(), fmt="%.17g", delimiter=",",
               header=",".join(dataset.header()), comments="")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path, provenance: str = "measured") -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    header = text.splitlines()[0].strip().split(",")
    if "z" not in header:
        raise ValueError(f"{path}: header must contain a 'z' column")
    n_x = header.index("z")
    expected = [f"x{i}" for i in range(1, n_x + 1)] + ["z"]
    with_dz = expected + [f"dz{i}" for i in range(1, n_x + 1)]
    if header not in (expected, with_dz):
        raise ValueError(f"{path}: unexpected header {header}; want {expected} or {with_dz}")
    data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    dz = data[:, n_x + 1:] if len(header) == len(with_dz) else None
    return Dataset(data[:, :n_x], data[:, n_x], dz, provenance)


@dataclass(frozen=True, eq=False)
class RegressionMatrices:
    """Per-channel blocks ``(z^i, Phi^i)`` of the identification problem.

    Blocks are either materialized at construction or, with ``lazy=True``,
    recomputed from the dataset each time they are requested.  The lazy form
    keeps memory flat for large tensor-product bases.
    """

    dataset: Dataset
    basis: BasisSet
    channels: tuple[int, ...]
    _blocks: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return len(self.basis)

    @property
    def L(self) -> int:
        return self.dataset.L

    def z(self, i: int) -> np.ndarray:
        self._check(i)
        return self.dataset.channel(i)

    def phi(self, i: int) -> np.ndarray:
        self._check(i)
        if i in self._blocks:
            return self._blocks[i]
        X = self.dataset.x
        return self.basis.design(X) if i == 0 else self.basis.design_partial(X, i)

    def block(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.z(i), self.phi(i)

    def _check(self, i):
        if i not in self.channels:
            raise MissingChannelError(f"channel {i} not among built channels {self.channels}")


def build_regression_matrices(
    dataset: Dataset,
    basis: BasisSet,
    channels: Iterable[int] | None = None,
    lazy: bool = False,
) -> RegressionMatrices:
    """Stack ``z^i`` and ``Phi^i`` for the requested channels.

    By default channel 0 is built plus every derivative channel the dataset
    carries.  Requesting ``i > 0`` on a dataset without derivative samples
    raises :class:`MissingChannelError`.
    """
    if dataset.n_x != basis.n_x:
        raise DimensionError(f"dataset has n_x={dataset.n_x}, basis expects {basis.n_x}")
    if channels is None:
        channels = range(dataset.n_x + 1) if dataset.has_derivatives else (0,)
    channels = tuple(sorted(set(int(i) for i in channels)))
    for i in channels:
        if not 0 <= i <= dataset.n_x:
            raise DimensionError(f"channel {i} out of range 0..{dataset.n_x}")
        if i > 0 and not dataset.has_derivatives:
            raise MissingChannelError(f"channel {i} requested but the dataset has no derivative samples")
    mats = RegressionMatrices(dataset, basis, channels)
    if not lazy:
        for i in channels:
            Phi = mats.phi(i)
            Phi.setflags(write=False)
            mats._blocks[i] = Phi
    return mats


@dataclass(frozen=True)
class ScaleInfo:
    """Per-variable affine map ``x_scaled = gain * (x + offset)``."""

    offset: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", _frozen(self.offset))
        object.__setattr__(self, "gain", _frozen(self.gain))
        if not np.all(self.gain > 0):
            raise ValueError("scale gains must be strictly positive")

    def apply(self, X) -> np.ndarray:
        return self.gain * (np.asarray(X, dtype=float) + self.offset)

    def invert(self, Xs) -> np.ndarray:
        return np.asarray(Xs, dtype=float) / self.gain - self.offset

    def scale_gradient(self, dz) -> np.ndarray:
        """Gradient of the same function expressed in scaled coordinates."""
        return np.asarray(dz, dtype=float) / self.gain

    def unscale_gradient(self, dzs) -> np.ndarray:
        return np.asarray(dzs, dtype=float) * self.gain


def rescale(dataset: Dataset, target_range=(-1.0, 1.0)) -> tuple[Dataset, ScaleInfo]:
    """Map each regressor component affinely onto ``target_range``.

    Constant components go to the midpoint with unit gain.  Derivative
    channels are divided by the gain (chain rule), so the scaled dataset
    samples the same function in the new coordinates.
    """
    lo, hi = (float(v) for v in target_range)
    if not hi > lo:
        raise ValueError(f"empty target range {target_range}")
    mid = 0.5 * (lo + hi)
    xmin = dataset.x.min(axis=0)
    xmax = dataset.x.max(axis=0)
    span = xmax - xmin
    flat = span == 0
    gain = np.where(flat, 1.0, (hi - lo) / np.where(flat, 1.0, span))
    centre = 0.5 * (xmin + xmax)
    offset = mid / gain - centre
    info = ScaleInfo(offset, gain)
    dz = None if dataset.dz is None else info.scale_gradient(dataset.dz)
    return Dataset(info.apply(dataset.x), dataset.z, dz, dataset.provenance), info
