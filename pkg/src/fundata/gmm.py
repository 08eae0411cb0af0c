"""Gaussian mixtures with full covariances fitted by EM, and BIC selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

COV_FLOOR = 1e-6


@dataclass
class GmmModel:
    """Fitted mixture. ``bic = 2 loglik - n_params log(n)`` (larger is better)."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik: float
    n_obs: int
    n_iter: int = 0
    converged: bool = True
    history: List[float] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_params(self) -> int:
        k, d = self.n_components, self.dim
        return k - 1 + k * d + k * d * (d + 1) // 2

    @property
    def bic(self) -> float:
        return 2 * self.loglik - self.n_params * np.log(self.n_obs)

    def log_joint(self, points) -> np.ndarray:
        points = _as_points(points, self.dim)
        return _log_joint(points, self.weights, self.means, self.covariances)

    def predict_proba(self, points) -> np.ndarray:
        return gmm_posterior(self, points)

    def predict(self, points) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lower index
        return np.argmax(self.predict_proba(points), axis=1)


def _as_points(points, dim: Optional[int] = None) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    if dim is not None and x.shape[1] != dim:
        raise ValueError(f"points have dimension {x.shape[1]}, model has {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("points must be finite")
    return x


def _logsumexp(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def _log_joint(x, weights, means, covs) -> np.ndarray:
    """log(pi_k) + log N(x | m_k, S_k) as an (n, K) array."""
    diff = x[None, :, :] - means[:, None, :]
    sign, logdet = np.linalg.slogdet(covs)
    if np.any(sign <= 0):
        raise np.linalg.LinAlgError("covariance is not positive definite")
    quad = np.sum((diff @ np.linalg.inv(covs)) * diff, axis=2)
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    const = x.shape[1] * np.log(2 * np.pi)
    return (logw[:, None] - 0.5 * (quad + (logdet + const)[:, None])).T


def _floor_cov(covs: np.ndarray, floor: float) -> np.ndarray:
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    low = np.linalg.eigvalsh(covs)[:, 0] < floor
    if low.any():
        vals, vecs = np.linalg.eigh(covs[low])
        covs[low] = (vecs * np.maximum(vals, floor)[:, None, :]) @ vecs.transpose(0, 2, 1)
    return covs


def _m_step(x, resp, floor):
    nk = resp.sum(axis=0)
    weights = nk / x.shape[0]
    means = (resp.T @ x) / nk[:, None]
    diff = x[None, :, :] - means[:, None, :]
    covs = (resp.T[:, :, None] * diff).transpose(0, 2, 1) @ diff / nk[:, None, None]
    return weights, means, _floor_cov(covs, floor)


def _kmeanspp(x, k, rng) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    dist = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = dist.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=dist / total)
        centers.append(x[idx])
        dist = np.minimum(dist, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _em(x, k, rng, floor, tol, max_iter) -> GmmModel:
    n, d = x.shape
    centers = _kmeanspp(x, k, rng)
    nearest = np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), nearest] = 1.0
    history: List[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        empty = resp.sum(axis=0) < 1e-10 * n
        if empty.any():
            # put empty components on the currently worst explained points
            if history:
                worst = np.argsort(_logsumexp(log_joint), kind="stable")
            else:
                worst = np.arange(n)
            resp[:, empty] = 0.0
            for j, kk in enumerate(np.flatnonzero(empty)):
                resp[worst[j]] = 0.0
                resp[worst[j], kk] = 1.0
            history = []
        weights, means, covs = _m_step(x, resp, floor)
        log_joint = _log_joint(x, weights, means, covs)
        norm = _logsumexp(log_joint)
        ll = float(norm.sum())
        resp = np.exp(log_joint - norm[:, None])
        if history and abs(ll - history[-1]) <= tol * n:
            history.append(ll)
            converged = True
            break
        history.append(ll)
    return GmmModel(weights, means, covs, ll, n, it, converged, history)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def gmm_fit(
    points,
    n_components: int,
    seed=None,
    restarts: int = 1,
    tol: float = 1e-6,
    max_iter: int = 300,
) -> GmmModel:
    """EM for a full-covariance Gaussian mixture.

    Each restart starts from a k-means++ seeding (hard assignment to the
    nearest seed) and the run with the largest log-likelihood is kept.
    Covariance eigenvalues are floored at ``1e-6`` times the mean marginal
    variance of the data. Iterations stop when the average log-likelihood
    per point changes by at most ``tol`` or after ``max_iter`` steps.
    """
    x = _as_points(points)
    n, d = x.shape
    k = int(n_components)
    if k < 1:
        raise ValueError("n_components must be at least 1")
    if n < k:
        raise ValueError(f"cannot fit {k} components to {n} points")
    var = float(np.mean(x.var(axis=0)))
    if var <= 0 and k > 1:
        raise ValueError("data has zero variance; only one component can be fitted")
    floor = COV_FLOOR * var if var > 0 else 1e-12
    if k == 1:
        weights, means, covs = _m_step(x, np.ones((n, 1)), floor)
        ll = float(_log_joint(x, weights, means, covs).sum())
        return GmmModel(weights, means, covs, ll, n, 1, True, [ll])
    best = None
    for child in _seed_sequence(seed).spawn(max(1, restarts)):
        model = _em(x, k, np.random.default_rng(child), floor, tol, max_iter)
        if best is None or model.loglik > best.loglik:
            best = model
    return best


def gmm_posterior(model: GmmModel, points) -> np.ndarray:
    """Posterior component probabilities; each row sums to one."""
    lj = model.log_joint(points)
    return np.exp(lj - _logsumexp(lj)[:, None])


def gmm_select_k(
    points, k_max: int, seed=None, restarts: int = 1
) -> Tuple[int, Dict[int, GmmModel]]:
    """Fit K = 1..k_max and return the K maximizing the BIC with all models.

    Values of K that cannot be fitted (more components than points, zero
    variance) are skipped. Ties go to the smaller K.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    x = _as_points(points)
    models: Dict[int, GmmModel] = {}
    children = _seed_sequence(seed).spawn(k_max)
    for k in range(1, k_max + 1):
        if k > x.shape[0]:
            break
        try:
            models[k] = gmm_fit(x, k, seed=children[k - 1], restarts=restarts)
        except (ValueError, np.linalg.LinAlgError):
            if k == 1:
                raise
    best_k = 1
    for k, m in models.items():
        if m.bic > models[best_k].bic:
            best_k = k
    return best_k, models
