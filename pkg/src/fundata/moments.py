"""Mean and covariance function estimation with diagonal correction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import DenseFD, IrregularFD
from .quadrature import trapezoid_weights
from .smoothing import RankDeficientError, Smoother, kernel_eval, smooth_fd


def curves_on_grid(fd, smoother: Optional[Smoother] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Estimated curves as an (N, M) array on a common grid, NaN where absent.

    Dense data is taken as-is unless a smoother is given; irregular data is
    smoothed onto the union grid without extrapolation.
    """
    if isinstance(fd, DenseFD):
        if smoother is None or fd.n_dim != 1:
            return fd.grids[0] if fd.n_dim == 1 else None, fd.values
        smoothed = smooth_fd(fd, smoother)
        return smoothed.grids[0], smoothed.values
    if isinstance(fd, IrregularFD):
        if fd.n_dim != 1:
            raise ValueError("irregular two-dimensional data cannot be smoothed")
        smoothed = smooth_fd(fd, smoother or Smoother(), within_range=True)
        return smoothed.grids[0], smoothed.values
    raise TypeError(f"expected DenseFD or IrregularFD, got {type(fd).__name__}")


def _pointwise_mean(values: np.ndarray) -> np.ndarray:
    observed = ~np.isnan(values)
    counts = observed.sum(axis=0)
    if np.any(counts == 0):
        raise ValueError("a grid point has no contributing observation")
    return np.where(observed, values, 0.0).sum(axis=0) / counts


def estimate_mean(fd, smoother: Optional[Smoother] = None) -> DenseFD:
    """Pointwise average of the (optionally smoothed) curves."""
    if isinstance(fd, DenseFD) and fd.n_dim == 2 and smoother is None:
        return DenseFD(fd.argvals, _pointwise_mean(fd.values)[None])
    grid, values = curves_on_grid(fd, smoother)
    return DenseFD({"input_dim_0": grid}, _pointwise_mean(values)[None])


@dataclass
class CovSurface:
    """Covariance surface on ``grid_s`` x ``grid_t``.

    ``raw`` keeps the unsmoothed estimate (NaN where undefined); ``values``
    is the corrected surface.
    """

    grid_s: np.ndarray
    grid_t: np.ndarray
    values: np.ndarray
    raw: np.ndarray
    diagonal_corrected: bool = False
    noise_variance: Optional[float] = None
    bandwidth: Optional[float] = None

    def eigen(self) -> Tuple[np.ndarray, np.ndarray, int]:
        """Quadrature-weighted eigenvalues, eigenfunctions and clip count.

        Eigenvalues are sorted in decreasing order; negative ones are set
        to zero and counted.
        """
        if self.grid_s.shape != self.grid_t.shape or not np.array_equal(self.grid_s, self.grid_t):
            raise ValueError("eigen-decomposition needs a square surface")
        if np.any(np.isnan(self.values)):
            raise ValueError("covariance surface has undefined cells")
        w = trapezoid_weights(self.grid_s)
        sw = np.sqrt(w)
        sym = 0.5 * (self.values + self.values.T)
        vals, vecs = np.linalg.eigh(sw[:, None] * sym * sw[None, :])
        vals, vecs = vals[::-1], vecs[:, ::-1]
        n_clipped = int(np.sum(vals < 0))
        return np.clip(vals, 0, None), (vecs / sw[:, None]).T, n_clipped


def _centered(values: np.ndarray, mean: np.ndarray):
    observed = ~np.isnan(values)
    centered = np.where(observed, values - mean, 0.0)
    return centered, observed.astype(float)


def raw_covariance(values: np.ndarray) -> np.ndarray:
    """Pairwise-complete version of N^-1 sum X(s) X(t) - mu(s) mu(t).

    Cells with fewer than two contributing observations are NaN.
    """
    mean = _pointwise_mean(values)
    centered, observed = _centered(values, mean)
    counts = observed.T @ observed
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = (centered.T @ centered) / counts
    cov[counts < 2] = np.nan
    return cov


def _surface_terms(grid, h, kernel):
    u = (grid[None, :] - grid[:, None]) / h  # (eval, data)
    k = kernel_eval(kernel, u) / h
    return k, k * u, k * u * u


def _local_linear_surface(grid, data, weight, h, kernel, loo=False):
    """Product-kernel local linear fit of gridded data evaluated on the grid.

    Returns the fitted surface (NaN where the 3x3 system is singular) and,
    when ``loo`` is set, the leave-one-out predictions at the data cells.
    """
    k0, k1, k2 = _surface_terms(grid, h, kernel)
    wd = weight * data
    s = {}
    for name, left, right in (
        ("00", k0, k0), ("10", k1, k0), ("01", k0, k1),
        ("20", k2, k0), ("11", k1, k1), ("02", k0, k2),
    ):
        s[name] = left @ weight @ right.T
    t00 = k0 @ wd @ k0.T
    t10 = k1 @ wd @ k0.T
    t01 = k0 @ wd @ k1.T
    a_mat = np.stack([
        np.stack([s["00"], s["10"], s["01"]], -1),
        np.stack([s["10"], s["20"], s["11"]], -1),
        np.stack([s["01"], s["11"], s["02"]], -1),
    ], -2)
    a_vec = np.stack([t00, t10, t01], -1)

    def solve(a_mat, a_vec):
        flat_a = a_mat.reshape(-1, 3, 3)
        flat_b = a_vec.reshape(-1, 3)
        eig_min = np.linalg.eigvalsh(flat_a)[:, 0]
        trace = np.trace(flat_a, axis1=1, axis2=2)
        ok = (trace > 0) & (eig_min > 1e-10 * trace / 3)
        out = np.full(flat_b.shape[0], np.nan)
        if ok.any():
            out[ok] = np.linalg.solve(flat_a[ok], flat_b[ok][..., None])[:, 0, 0]
        return out.reshape(a_vec.shape[:2])

    fit = solve(a_mat, a_vec)
    if not loo:
        return fit, None
    self_w = (float(kernel_eval(kernel, 0.0)) / h) ** 2 * weight
    a_loo = a_mat.copy()
    b_loo = a_vec.copy()
    a_loo[..., 0, 0] -= self_w
    b_loo[..., 0] -= self_w * data
    return fit, solve(a_loo, b_loo)


def select_surface_bandwidth(grid, data, weight, kernel="epanechnikov", n_candidates=8) -> float:
    """Leave-one-out CV bandwidth for the covariance smoother."""
    span = grid[-1] - grid[0]
    gap = np.max(np.diff(grid))
    candidates = np.geomspace(min(1.5 * gap, span / 2), span / 2, n_candidates)
    cells = weight > 0
    best_h, best = None, np.inf
    for h in candidates:
        _, pred = _local_linear_surface(grid, data, weight, h, kernel, loo=True)
        err = pred[cells] - data[cells]
        err = err[np.isfinite(err)]
        if err.size < 0.9 * cells.sum():
            continue
        score = float(np.mean(err ** 2))
        if score < best:
            best_h, best = float(h), score
    if best_h is None:
        raise RankDeficientError(float(grid[0]))
    return best_h


def smooth_covariance(
    grid, raw, bandwidth: Optional[float] = None, kernel: str = "epanechnikov"
) -> Tuple[np.ndarray, float]:
    """Local linear smooth of the off-diagonal, finite cells of ``raw``.

    Cells where the local system is singular at the chosen bandwidth are
    refitted with bandwidths growing by a factor 1.5.
    """
    grid = np.asarray(grid, dtype=float)
    weight = (~np.isnan(raw)).astype(float)
    np.fill_diagonal(weight, 0.0)
    data = np.nan_to_num(raw)
    if bandwidth is None:
        bandwidth = select_surface_bandwidth(grid, data, weight, kernel)
    fit, _ = _local_linear_surface(grid, data, weight, bandwidth, kernel)
    # cells without enough neighbours (corners, sparse gaps) use wider windows
    h = bandwidth
    span = grid[-1] - grid[0]
    while np.any(np.isnan(fit)) and h < 2 * span:
        h *= 1.5
        wider, _ = _local_linear_surface(grid, data, weight, h, kernel)
        fill = np.isnan(fit)
        fit[fill] = wider[fill]
    if np.any(np.isnan(fit)):
        bad = np.argwhere(np.isnan(fit))[0]
        raise RankDeficientError(float(grid[bad[0]]))
    return 0.5 * (fit + fit.T), bandwidth


def noise_from_diagonals(grid, raw_diag, smooth_diag) -> float:
    """Mean positive excess of the raw over the smoothed diagonal on the central half."""
    lo = grid[0] + 0.25 * (grid[-1] - grid[0])
    hi = grid[-1] - 0.25 * (grid[-1] - grid[0])
    central = (grid >= lo) & (grid <= hi) & np.isfinite(raw_diag)
    if not central.any():
        return 0.0
    return float(np.mean(np.maximum(0.0, raw_diag[central] - smooth_diag[central])))


def estimate_covariance(
    fd,
    smoother: Optional[Smoother] = None,
    smooth: bool = True,
    bandwidth: Optional[float] = None,
    kernel: str = "epanechnikov",
    fill: str = "diagonal",
) -> CovSurface:
    """Covariance surface of one-dimensional functional data.

    The raw surface uses divisor N. With ``smooth`` the off-diagonal cells
    are smoothed by a product-kernel local linear smoother (bandwidth chosen
    by leave-one-out CV unless given). ``fill='diagonal'`` keeps the raw
    off-diagonal cells and only replaces the diagonal and undefined cells;
    ``fill='all'`` returns the smoothed surface everywhere. The noise
    variance is the mean of ``max(0, raw - smoothed)`` along the diagonal
    over the central half of the domain.
    """
    if fd.n_obs < 2:
        raise ValueError("covariance estimation needs at least two observations")
    if fd.n_dim != 1:
        raise ValueError("covariance surfaces are only built for one-dimensional domains")
    if fill not in ("diagonal", "all"):
        raise ValueError("fill must be 'diagonal' or 'all'")
    grid, values = curves_on_grid(fd, smoother)
    raw = raw_covariance(values)
    if not smooth:
        return CovSurface(grid, grid, raw.copy(), raw)
    fit, h = smooth_covariance(grid, raw, bandwidth, kernel)
    if fill == "all":
        out = fit
    else:
        out = raw.copy()
        undefined = np.isnan(out)
        np.fill_diagonal(undefined, True)
        out[undefined] = fit[undefined]
        out = 0.5 * (out + out.T)
    sigma2 = noise_from_diagonals(grid, np.diag(raw), np.diag(fit))
    return CovSurface(grid, grid, out, raw, diagonal_corrected=True,
                      noise_variance=sigma2, bandwidth=h)


def cross_covariance(
    fd_p, fd_q, smoother_p: Optional[Smoother] = None, smoother_q: Optional[Smoother] = None
) -> CovSurface:
    """Cross-covariance N^-1 sum X_p(s) X_q(t) - mu_p(s) mu_q(t) (pairwise complete)."""
    if fd_p.n_obs != fd_q.n_obs:
        raise ValueError("components must have the same number of observations")
    grid_p, xp = curves_on_grid(fd_p, smoother_p)
    grid_q, xq = curves_on_grid(fd_q, smoother_q)
    cp, op = _centered(xp, _pointwise_mean(xp))
    cq, oq = _centered(xq, _pointwise_mean(xq))
    counts = op.T @ oq
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = (cp.T @ cq) / counts
    cov[counts < 2] = np.nan
    return CovSurface(grid_p, grid_q, cov.copy(), cov)
