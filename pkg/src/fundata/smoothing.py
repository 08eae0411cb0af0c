"""Kernels and local polynomial smoothing of curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .core import DenseFD, IrregularFD

KERNELS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "gaussian": lambda u: np.exp(-0.5 * u ** 2) / math.sqrt(2 * math.pi),
    "epanechnikov": lambda u: np.where(np.abs(u) < 1, 0.75 * (1 - u ** 2), 0.0),
    "tricube": lambda u: np.where(np.abs(u) < 1, 70 / 81 * (1 - np.abs(u) ** 3) ** 3, 0.0),
    "bisquare": lambda u: np.where(np.abs(u) < 1, 15 / 16 * (1 - u ** 2) ** 2, 0.0),
}
COMPACT_KERNELS = ("epanechnikov", "tricube", "bisquare")

# smallest eigenvalue of A below RANK_TOL * trace(A) / (d + 1) is rank deficient
RANK_TOL = 1e-10


class RankDeficientError(ValueError):
    """The local normal equations are singular at an evaluation point."""

    def __init__(self, t0: float, obs: Optional[int] = None):
        self.t0 = t0
        self.obs = obs
        where = f" for observation {obs}" if obs is not None else ""
        super().__init__(f"local polynomial fit is rank deficient at t0={t0:.17g}{where}")


def kernel_eval(kernel: str, u) -> np.ndarray:
    try:
        k = KERNELS[kernel]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {sorted(KERNELS)}") from None
    return k(np.asarray(u, dtype=float))


def _design(u: np.ndarray, degree: int) -> np.ndarray:
    # U(u) = (1, u, u^2/2!, ..., u^d/d!)
    powers = [np.ones_like(u)]
    for k in range(1, degree + 1):
        powers.append(powers[-1] * u / k)
    return np.stack(powers, axis=-1)


def _normal_equations(t, y, x0, degree, bandwidth, kernel):
    u = (t[None, :] - x0[:, None]) / bandwidth
    kh = kernel_eval(kernel, u) / bandwidth
    design = _design(u, degree)
    weighted = design * kh[..., None]
    m = t.size
    a_mat = np.einsum("emi,emj->eij", weighted, design) / m
    a_vec = np.einsum("emi,m->ei", weighted, y) / m
    return a_mat, a_vec


def _solve(a_mat, a_vec, x0, degree):
    """Solve the batched normal equations, flagging rank deficiency."""
    eig_min = np.linalg.eigvalsh(a_mat)[:, 0]
    trace = np.trace(a_mat, axis1=1, axis2=2)
    bad = ~(trace > 0) | (eig_min <= RANK_TOL * trace / (degree + 1))
    coef = np.full(a_vec.shape, np.nan)
    ok = ~bad
    if ok.any():
        coef[ok] = np.linalg.solve(a_mat[ok], a_vec[ok][..., None])[..., 0]
    return coef, bad


def local_poly_fit(
    t, y, t0: float, degree: int = 1, bandwidth: float = 0.1, kernel: str = "epanechnikov"
) -> Tuple[float, np.ndarray]:
    """Local polynomial estimate at a single point.

    Returns the estimate (first coefficient) and the full coefficient
    vector of the local fit in the ``U((T - t0) / h)`` parametrization.
    """
    est, coef = local_poly_smooth(t, y, [t0], degree, bandwidth, kernel, return_coef=True)
    return float(est[0]), coef[0]


def local_poly_smooth(
    t,
    y,
    x0,
    degree: int = 1,
    bandwidth: float = 0.1,
    kernel: str = "epanechnikov",
    return_coef: bool = False,
):
    """Local polynomial estimates at each point of ``x0``.

    Raises
    ------
    RankDeficientError
        At the first evaluation point where the normal equations are
        singular (e.g. fewer than ``degree + 1`` points in the kernel window).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if t.ndim != 1 or t.shape != y.shape or t.size == 0:
        raise ValueError("t and y must be non-empty vectors of equal length")
    if degree < 0 or int(degree) != degree:
        raise ValueError("degree must be a non-negative integer")
    if not (np.isfinite(bandwidth) and bandwidth > 0):
        raise ValueError("bandwidth must be finite and positive")
    a_mat, a_vec = _normal_equations(t, y, x0, int(degree), bandwidth, kernel)
    coef, bad = _solve(a_mat, a_vec, x0, int(degree))
    if bad.any():
        raise RankDeficientError(float(x0[np.argmax(bad)]))
    return (coef[:, 0], coef) if return_coef else coef[:, 0]


def knn_bandwidth(t, t0: float, neighborhood: int = 2) -> float:
    """Distance from ``t0`` to its ``neighborhood``-th nearest point on each side.

    The larger of the two one-sided distances is returned so that the window
    holds ``neighborhood`` points on both sides when available; at a boundary
    only the available side counts. Points equal to ``t0`` are not counted.
    """
    t = np.sort(np.asarray(t, dtype=float))
    if neighborhood < 1:
        raise ValueError("neighborhood must be at least 1")
    left = t0 - t[t < t0][::-1]
    right = t[t > t0] - t0
    sides = [s[neighborhood - 1] for s in (left, right) if s.size >= neighborhood]
    if sides:
        return float(max(sides))
    spread = np.concatenate([left, right])
    if spread.size == 0:
        raise ValueError("need at least one sampling point different from t0")
    return float(spread.max())


def bandwidth_grid(t, degree: int, n_candidates: int = 20) -> np.ndarray:
    t = np.sort(np.asarray(t, dtype=float))
    span = t[-1] - t[0]
    if span <= 0:
        raise ValueError("need at least two distinct sampling points")
    h_min = min((degree + 1) * np.max(np.diff(t)), span)
    return np.geomspace(h_min, span, n_candidates)


def cv_scores(t, y, candidates, degree: int = 1, kernel: str = "epanechnikov") -> np.ndarray:
    """Leave-one-out squared prediction error for each candidate bandwidth.

    Candidates for which any leave-one-out fit is singular score ``inf``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    m = t.size
    out = np.full(len(candidates), np.inf)
    for i, h in enumerate(candidates):
        a_mat, a_vec = _normal_equations(t, y, t, degree, h, kernel)
        self_w = float(kernel_eval(kernel, 0.0)) / (h * m)
        a_mat[:, 0, 0] -= self_w
        a_vec[:, 0] -= self_w * y
        coef, bad = _solve(a_mat, a_vec, t, degree)
        if not bad.any():
            out[i] = float(np.mean((y - coef[:, 0]) ** 2))
    return out


def estimate_bandwidth(
    t,
    y,
    t0: float = None,
    method: str = "cv",
    neighborhood: int = 2,
    degree: int = 1,
    kernel: str = "epanechnikov",
    candidates=None,
) -> float:
    """Pick a bandwidth by leave-one-out CV or by nearest-neighbour distance.

    CV minimizes the leave-one-out error over a log-spaced grid; scores
    within ``1e-10`` (relative to the mean square of ``y``) of the minimum
    count as ties and the largest tied bandwidth wins.
    """
    t = np.asarray(t, dtype=float)
    if method == "knn":
        if t0 is None:
            raise ValueError("knn bandwidth needs an anchor point t0")
        return knn_bandwidth(t, t0, neighborhood)
    if method != "cv":
        raise ValueError(f"unknown bandwidth method {method!r}")
    if t.size < degree + 2:
        raise ValueError(f"cv needs at least {degree + 2} points, got {t.size}")
    if candidates is None:
        candidates = bandwidth_grid(t, degree)
    candidates = np.asarray(candidates, dtype=float)
    scores = cv_scores(t, y, candidates, degree, kernel)
    if not np.isfinite(scores).any():
        raise ValueError("every candidate bandwidth gives a singular fit")
    best = scores.min()
    tol = 1e-10 * max(float(np.mean(np.asarray(y, dtype=float) ** 2)), np.finfo(float).tiny)
    tied = np.flatnonzero(scores <= best + tol)
    return float(candidates[tied].max())


@dataclass
class Smoother:
    """Local polynomial smoothing settings.

    A fixed ``bandwidth`` wins over ``method``. For ``method='knn'`` the
    anchor ``point`` is given on the [0, 1]-standardized domain.
    """

    degree: int = 1
    kernel: str = "epanechnikov"
    bandwidth: Optional[float] = None
    method: str = "cv"
    point: float = 0.5
    neighborhood: int = 2

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.method not in ("cv", "knn"):
            raise ValueError(f"unknown bandwidth method {self.method!r}")

    def bandwidth_for(self, t, y) -> float:
        if self.bandwidth is not None:
            return float(self.bandwidth)
        t = np.asarray(t, dtype=float)
        anchor = t.min() + self.point * (t.max() - t.min())
        return estimate_bandwidth(
            t, y, anchor, self.method, self.neighborhood, self.degree, self.kernel
        )

    def fit(self, t, y, x0, within_range: bool = False) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        h = self.bandwidth_for(t, y)
        if not within_range:
            return local_poly_smooth(t, y, x0, self.degree, h, self.kernel)
        out = np.full(x0.shape, np.nan)
        inside = (x0 >= t.min()) & (x0 <= t.max())
        if inside.any():
            out[inside] = local_poly_smooth(t, y, x0[inside], self.degree, h, self.kernel)
        return out


def _observations(fd):
    if isinstance(fd, DenseFD):
        grid = fd.grids[0]
        for n in range(fd.n_obs):
            row = fd.values[n]
            keep = ~np.isnan(row)
            yield grid[keep], row[keep]
    else:
        for n in range(fd.n_obs):
            grids, vals = fd.obs(n)
            yield grids[0], vals


def smooth_fd(
    fd,
    smoother: Optional[Smoother] = None,
    output_grid=None,
    within_range: bool = False,
) -> DenseFD:
    """Smooth each observation independently onto a common grid.

    The output grid defaults to the input grid (dense) or the union of the
    observation grids (irregular). With ``within_range`` points outside an
    observation's sampling range are left missing instead of extrapolated.
    """
    smoother = smoother or Smoother()
    if fd.n_dim != 1:
        raise ValueError("smoothing is implemented for one-dimensional domains only")
    if output_grid is None:
        output_grid = fd.grids[0] if isinstance(fd, DenseFD) else fd.union_grid(0)
    output_grid = np.asarray(output_grid, dtype=float)
    out = np.empty((fd.n_obs, output_grid.size))
    for n, (t, y) in enumerate(_observations(fd)):
        if t.size < smoother.degree + 2:
            raise ValueError(
                f"observation {n} has {t.size} points, need at least {smoother.degree + 2}"
            )
        try:
            out[n] = smoother.fit(t, y, output_grid, within_range)
        except RankDeficientError as err:
            raise RankDeficientError(err.t0, obs=n) from None
    return DenseFD({"input_dim_0": output_grid}, out)
