"""Containers for dense, irregular and multivariate functional data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple, Union

import numpy as np

MISSING = np.nan


def is_missing(values: np.ndarray) -> np.ndarray:
    """Boolean mask of missing cells."""
    return np.isnan(values)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def check_grid(points, name: str = "grid") -> np.ndarray:
    """Validate a one-dimensional sampling grid and return a read-only copy.

    Raises
    ------
    ValueError
        If the grid is empty, not one-dimensional, contains non-finite
        values or is not strictly increasing (duplicates are rejected).
    """
    grid = np.asarray(points, dtype=float)
    if grid.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {grid.shape}")
    if grid.size == 0:
        raise ValueError(f"{name} must contain at least one point")
    if not np.all(np.isfinite(grid)):
        raise ValueError(f"{name} contains non-finite values")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError(f"{name} must be strictly increasing")
    return _frozen(grid)


def standardize_grid(grid: np.ndarray) -> np.ndarray:
    """Affine map of ``grid`` onto [0, 1]; a single point maps to 0."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return np.zeros(1)
    out = (grid - grid[0]) / (grid[-1] - grid[0])
    out[0], out[-1] = 0.0, 1.0
    return out


def _dim_names(n: int) -> List[str]:
    return [f"input_dim_{i}" for i in range(n)]


def _as_argvals(argvals) -> Dict[str, np.ndarray]:
    if isinstance(argvals, Mapping):
        items = list(argvals.items())
    elif isinstance(argvals, np.ndarray) and argvals.ndim == 1:
        items = [("input_dim_0", argvals)]
    else:
        items = list(zip(_dim_names(len(argvals)), argvals))
    if not 1 <= len(items) <= 2:
        raise ValueError("only one- and two-dimensional domains are supported")
    return {str(k): check_grid(v, name=str(k)) for k, v in items}


@dataclass(frozen=True)
class FDSummary:
    """Descriptive statistics of a univariate functional data object.

    ``n_points`` holds the mean number of points per observation for
    irregular data (flagged by ``n_points_is_mean``).
    """

    n_obs: int
    n_points: Dict[str, float]
    n_dim: int
    range_obs: Tuple[float, float]
    range_points: Dict[str, Tuple[float, float]]
    n_points_is_mean: bool = False


class DenseFD:
    """Observations sampled on one common rectangular grid.

    Parameters
    ----------
    argvals : mapping or sequence of 1-D arrays
        Sampling points for each input dimension (one or two).
    values : array-like of shape (N, M1[, M2])
        Observed values; ``np.nan`` marks a missing cell.
    """

    def __init__(self, argvals, values):
        self._argvals = _as_argvals(argvals)
        values = np.asarray(values, dtype=float)
        shape = tuple(g.size for g in self._argvals.values())
        if values.ndim == len(shape):
            values = values[np.newaxis]
        if values.ndim != len(shape) + 1 or values.shape[1:] != shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid lengths {shape}"
            )
        if values.shape[0] == 0:
            raise ValueError("functional data must contain at least one observation")
        if np.any(np.isinf(values)):
            raise ValueError("values must be finite or missing")
        observed = ~is_missing(values).reshape(values.shape[0], -1)
        empty = np.flatnonzero(~observed.any(axis=1))
        if empty.size:
            raise ValueError(f"observation {int(empty[0])} has no observed value")
        self._values = _frozen(values)

    @property
    def argvals(self) -> Dict[str, np.ndarray]:
        return dict(self._argvals)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def argvals_stand(self) -> Dict[str, np.ndarray]:
        return {k: standardize_grid(v) for k, v in self._argvals.items()}

    @property
    def grids(self) -> List[np.ndarray]:
        return list(self._argvals.values())

    @property
    def n_obs(self) -> int:
        return self._values.shape[0]

    @property
    def n_dim(self) -> int:
        return len(self._argvals)

    @property
    def n_points(self) -> Dict[str, int]:
        return {k: v.size for k, v in self._argvals.items()}

    @property
    def range_obs(self) -> Tuple[float, float]:
        return float(np.nanmin(self._values)), float(np.nanmax(self._values))

    @property
    def range_points(self) -> Dict[str, Tuple[float, float]]:
        return {k: (float(v[0]), float(v[-1])) for k, v in self._argvals.items()}

    @property
    def has_missing(self) -> bool:
        return bool(np.any(is_missing(self._values)))

    def __len__(self) -> int:
        return self.n_obs

    def __getitem__(self, index) -> "DenseFD":
        if isinstance(index, slice):
            lo, hi, step = index.indices(self.n_obs)
            if step != 1:
                return self.take(range(lo, hi, step))
            return self.subset(lo, max(lo, hi))
        if isinstance(index, (int, np.integer)):
            i = int(index) + (self.n_obs if index < 0 else 0)
            return self.subset(i, i + 1)
        return self.take(index)

    def subset(self, lo: int, hi: int) -> "DenseFD":
        """Observations with positions in the half-open interval [lo, hi)."""
        _check_range(lo, hi, self.n_obs)
        return DenseFD(self._argvals, self._values[lo:hi])

    def take(self, indices) -> "DenseFD":
        idx = _check_indices(indices, self.n_obs)
        return DenseFD(self._argvals, self._values[idx])

    def to_irregular(self) -> "IrregularFD":
        return to_irregular(self)

    def summary(self) -> FDSummary:
        return summary(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseFD) or self.n_dim != other.n_dim:
            return False
        same_grid = all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.grids, other.grids)
        )
        return same_grid and np.array_equal(self._values, other._values, equal_nan=True)

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"Univariate functional data object with {self.n_obs} observations "
            f"on a {self.n_dim}-dimensional support."
        )


class IrregularFD:
    """Observations with their own sampling points.

    Parameters
    ----------
    argvals : mapping
        ``{dimension name: {obs key: 1-D grid}}``. A plain ``{obs key: grid}``
        mapping is accepted for one-dimensional domains.
    values : mapping
        ``{obs key: array of shape (M_n1[, M_n2])}``. Keys must match those
        of ``argvals``; observations are renumbered 0..N-1 in sorted key
        order.
    """

    def __init__(self, argvals: Mapping, values: Mapping):
        if not values:
            raise ValueError("functional data must contain at least one observation")
        first = next(iter(argvals.values())) if argvals else None
        if not isinstance(first, Mapping):
            argvals = {"input_dim_0": argvals}
        if not 1 <= len(argvals) <= 2:
            raise ValueError("only one- and two-dimensional domains are supported")
        keys = sorted(values)
        for dim, per_obs in argvals.items():
            if sorted(per_obs) != keys:
                raise ValueError(f"observation keys of argvals[{dim!r}] and values differ")
        self._argvals: Dict[str, Dict[int, np.ndarray]] = {}
        for dim, per_obs in argvals.items():
            self._argvals[str(dim)] = {
                n: check_grid(per_obs[k], name=f"{dim}[{k}]") for n, k in enumerate(keys)
            }
        self._values: Dict[int, np.ndarray] = {}
        for n, k in enumerate(keys):
            v = np.asarray(values[k], dtype=float)
            shape = tuple(self._argvals[d][n].size for d in self._argvals)
            if v.shape != shape:
                raise ValueError(
                    f"observation {k}: values shape {v.shape} does not match grid {shape}"
                )
            if not np.all(np.isfinite(v)):
                raise ValueError(f"observation {k} contains missing or non-finite values")
            self._values[n] = _frozen(v)

    @classmethod
    def from_lists(cls, grids: Sequence, values: Sequence) -> "IrregularFD":
        """Build one-dimensional irregular data from parallel lists."""
        return cls(dict(enumerate(grids)), dict(enumerate(values)))

    @property
    def argvals(self) -> Dict[str, Dict[int, np.ndarray]]:
        return {k: dict(v) for k, v in self._argvals.items()}

    @property
    def values(self) -> Dict[int, np.ndarray]:
        return dict(self._values)

    @property
    def argvals_stand(self) -> Dict[str, Dict[int, np.ndarray]]:
        out = {}
        for dim, per_obs in self._argvals.items():
            union = self.union_grid(dim)
            lo, span = union[0], union[-1] - union[0]
            out[dim] = {
                n: (g - lo) / span if span > 0 else np.zeros_like(g)
                for n, g in per_obs.items()
            }
        return out

    @property
    def n_obs(self) -> int:
        return len(self._values)

    @property
    def n_dim(self) -> int:
        return len(self._argvals)

    @property
    def n_points(self) -> Dict[str, float]:
        return {
            dim: float(np.mean([g.size for g in per_obs.values()]))
            for dim, per_obs in self._argvals.items()
        }

    @property
    def range_obs(self) -> Tuple[float, float]:
        lo = min(float(v.min()) for v in self._values.values())
        hi = max(float(v.max()) for v in self._values.values())
        return lo, hi

    @property
    def range_points(self) -> Dict[str, Tuple[float, float]]:
        out = {}
        for dim in self._argvals:
            union = self.union_grid(dim)
            out[dim] = (float(union[0]), float(union[-1]))
        return out

    def union_grid(self, dim: Union[str, int] = 0) -> np.ndarray:
        if isinstance(dim, int):
            dim = list(self._argvals)[dim]
        return np.unique(np.concatenate(list(self._argvals[dim].values())))

    def obs(self, n: int) -> Tuple[List[np.ndarray], np.ndarray]:
        """Grids and values of observation ``n``."""
        return [per_obs[n] for per_obs in self._argvals.values()], self._values[n]

    def __len__(self) -> int:
        return self.n_obs

    def __getitem__(self, index) -> "IrregularFD":
        if isinstance(index, slice):
            lo, hi, step = index.indices(self.n_obs)
            if step != 1:
                return self.take(range(lo, hi, step))
            return self.subset(lo, max(lo, hi))
        if isinstance(index, (int, np.integer)):
            i = int(index) + (self.n_obs if index < 0 else 0)
            return self.subset(i, i + 1)
        return self.take(index)

    def subset(self, lo: int, hi: int) -> "IrregularFD":
        """Observations with positions in the half-open interval [lo, hi)."""
        _check_range(lo, hi, self.n_obs)
        return self.take(range(lo, hi))

    def take(self, indices) -> "IrregularFD":
        idx = _check_indices(indices, self.n_obs)
        argvals = {
            dim: {i: per_obs[int(n)] for i, n in enumerate(idx)}
            for dim, per_obs in self._argvals.items()
        }
        values = {i: self._values[int(n)] for i, n in enumerate(idx)}
        return IrregularFD(argvals, values)

    def to_dense(self) -> DenseFD:
        return to_dense(self)

    def summary(self) -> FDSummary:
        return summary(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IrregularFD) or self.n_obs != other.n_obs:
            return False
        if list(self._argvals) != list(other._argvals):
            return False
        for dim in self._argvals:
            for n in range(self.n_obs):
                a, b = self._argvals[dim][n], other._argvals[dim][n]
                if a.shape != b.shape or not np.array_equal(a, b):
                    return False
        return all(np.array_equal(self._values[n], other._values[n]) for n in range(self.n_obs))

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"Irregular functional data object with {self.n_obs} observations "
            f"on a {self.n_dim}-dimensional support."
        )


UnivariateFD = Union[DenseFD, IrregularFD]


class MultivariateFD:
    """Ordered list of P univariate components sharing the same observations."""

    def __init__(self, components: Sequence[UnivariateFD]):
        components = list(components)
        if not components:
            raise ValueError("a multivariate object needs at least one component")
        for c in components:
            _check_component(c)
        n = components[0].n_obs
        for p, c in enumerate(components):
            if c.n_obs != n:
                raise ValueError(
                    f"component {p} has {c.n_obs} observations, expected {n}"
                )
        self._components = components

    @property
    def components(self) -> List[UnivariateFD]:
        return list(self._components)

    @property
    def n_functional(self) -> int:
        return len(self._components)

    @property
    def n_obs(self) -> int:
        return self._components[0].n_obs

    @property
    def n_dim(self) -> List[int]:
        return [c.n_dim for c in self._components]

    @property
    def n_points(self) -> List[Dict[str, float]]:
        return [c.n_points for c in self._components]

    def __len__(self) -> int:
        return len(self._components)

    def __iter__(self) -> Iterator[UnivariateFD]:
        return iter(self._components)

    def __getitem__(self, p: int) -> UnivariateFD:
        return self._components[p]

    def append(self, component: UnivariateFD) -> None:
        _check_component(component)
        if component.n_obs != self.n_obs:
            raise ValueError(
                f"component has {component.n_obs} observations, expected {self.n_obs}"
            )
        self._components.append(component)

    def extend(self, components: Sequence[UnivariateFD]) -> None:
        components = list(components)
        for c in components:
            _check_component(c)
            if c.n_obs != self.n_obs:
                raise ValueError(f"component has {c.n_obs} observations, expected {self.n_obs}")
        self._components.extend(components)

    def pop(self, p: int = -1) -> UnivariateFD:
        if len(self._components) == 1:
            raise ValueError("cannot remove the last component")
        return self._components.pop(p)

    def remove(self, component: UnivariateFD) -> None:
        for p, c in enumerate(self._components):
            if c is component:
                self.pop(p)
                return
        raise ValueError("component not found")

    def take(self, indices) -> "MultivariateFD":
        return MultivariateFD([c.take(indices) for c in self._components])

    def get_obs(self) -> Iterator["MultivariateFD"]:
        """Iterate over observations, each as a one-observation object."""
        for n in range(self.n_obs):
            yield MultivariateFD([c.subset(n, n + 1) for c in self._components])

    def summary(self) -> List[FDSummary]:
        return summary(self)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MultivariateFD)
            and len(self) == len(other)
            and all(a == b for a, b in zip(self._components, other._components))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"Multivariate functional data object with {self.n_functional} functions "
            f"of {self.n_obs} observations."
        )


def _check_component(c) -> None:
    if not isinstance(c, (DenseFD, IrregularFD)):
        raise TypeError(f"components must be DenseFD or IrregularFD, got {type(c).__name__}")


def _check_range(lo: int, hi: int, n: int) -> None:
    if not (0 <= lo <= hi <= n):
        raise IndexError(f"range [{lo}, {hi}) is outside [0, {n})")
    if lo == hi:
        raise ValueError(f"range [{lo}, {hi}) selects no observation")


def _check_indices(indices, n: int) -> np.ndarray:
    idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    idx = idx.astype(int)
    if idx.size == 0:
        raise ValueError("selection contains no observation")
    if np.any((idx < 0) | (idx >= n)):
        raise IndexError(f"indices outside [0, {n})")
    return idx


def construct_dense(argvals, values) -> DenseFD:
    return DenseFD(argvals, values)


def construct_irregular(argvals, values) -> IrregularFD:
    return IrregularFD(argvals, values)


def construct_multivariate(components) -> MultivariateFD:
    return MultivariateFD(components)


def summary(fd) -> Union[FDSummary, List[FDSummary]]:
    """Number of observations, points, dimension and value/point ranges."""
    if isinstance(fd, MultivariateFD):
        return [summary(c) for c in fd]
    return FDSummary(
        n_obs=fd.n_obs,
        n_points=dict(fd.n_points),
        n_dim=fd.n_dim,
        range_obs=fd.range_obs,
        range_points=fd.range_points,
        n_points_is_mean=isinstance(fd, IrregularFD),
    )


def to_irregular(fd: DenseFD) -> IrregularFD:
    """Drop the missing cells of every observation.

    For two-dimensional domains, rows and columns that are entirely missing
    are dropped; any remaining missing cell raises ``ValueError``.
    """
    names = list(fd.argvals)
    argvals: Dict[str, Dict[int, np.ndarray]] = {d: {} for d in names}
    values: Dict[int, np.ndarray] = {}
    for n in range(fd.n_obs):
        row = fd.values[n]
        observed = ~is_missing(row)
        if fd.n_dim == 1:
            argvals[names[0]][n] = fd.grids[0][observed]
            values[n] = row[observed]
        else:
            keep_r = observed.any(axis=1)
            keep_c = observed.any(axis=0)
            block = row[np.ix_(keep_r, keep_c)]
            if np.any(is_missing(block)):
                raise ValueError(
                    f"observation {n}: missing cells do not form full rows/columns"
                )
            argvals[names[0]][n] = fd.grids[0][keep_r]
            argvals[names[1]][n] = fd.grids[1][keep_c]
            values[n] = block
    return IrregularFD(argvals, values)


def to_dense(fd: IrregularFD) -> DenseFD:
    """Place observations on the sorted union grid, filling gaps with NaN."""
    names = list(fd.argvals)
    unions = [fd.union_grid(d) for d in names]
    shape = (fd.n_obs,) + tuple(u.size for u in unions)
    out = np.full(shape, MISSING)
    for n in range(fd.n_obs):
        grids, vals = fd.obs(n)
        pos = [np.searchsorted(u, g) for u, g in zip(unions, grids)]
        if fd.n_dim == 1:
            out[n, pos[0]] = vals
        else:
            out[n][np.ix_(pos[0], pos[1])] = vals
    return DenseFD(dict(zip(names, unions)), out)


def as_multivariate(fd) -> MultivariateFD:
    if isinstance(fd, MultivariateFD):
        return fd
    return MultivariateFD([fd])


def iterate_obs(fd: MultivariateFD) -> Iterator[MultivariateFD]:
    return fd.get_obs()
