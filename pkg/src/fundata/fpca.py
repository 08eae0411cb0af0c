"""Univariate FPCA, FCP-TPA for images and multivariate FPCA."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .core import DenseFD, IrregularFD, MultivariateFD, as_multivariate
from .io import atomic_write_text
from .moments import estimate_covariance, estimate_mean
from .quadrature import trapezoid_weights
from .smoothing import Smoother

MODEL_FORMAT = "fundata-mfpca"
MODEL_VERSION = 1
SCORE_METHODS = ("NumInt", "PACE")


class ConvergenceError(RuntimeError):
    pass


def sign_fix(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so that its entry of largest absolute value is positive."""
    flat = vectors.reshape(vectors.shape[0], -1)
    idx = np.argmax(np.abs(flat), axis=1)
    signs = np.sign(flat[np.arange(flat.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs.reshape((-1,) + (1,) * (vectors.ndim - 1))


def select_n_components(eigenvalues: np.ndarray, n_comp: Union[int, float]) -> int:
    """Number of components to keep.

    ``n_comp < 1`` is a proportion of explained variance: the smallest J whose
    leading eigenvalues reach it. ``n_comp >= 1`` is a count.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.size == 0:
        raise ValueError("no positive eigenvalue available")
    if n_comp <= 0:
        raise ValueError("n_comp must be positive")
    if n_comp < 1:
        ratio = np.cumsum(eigenvalues) / eigenvalues.sum()
        return int(np.searchsorted(ratio, n_comp - 1e-12) + 1)
    if int(n_comp) != n_comp:
        raise ValueError("n_comp >= 1 must be an integer")
    if n_comp > eigenvalues.size:
        raise ValueError(
            f"requested {int(n_comp)} components, only {eigenvalues.size} positive eigenvalues"
        )
    return int(n_comp)


@dataclass
class UfpcaModel:
    """Fitted univariate FPCA on a one-dimensional grid."""

    argvals: np.ndarray
    mean: np.ndarray
    eigenfunctions: np.ndarray
    eigenvalues: np.ndarray
    n_comp: Union[int, float]
    noise_variance: float = 0.0
    spectrum: Optional[np.ndarray] = None
    n_clipped: int = 0

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = self.spectrum.sum() if self.spectrum is not None else self.eigenvalues.sum()
        return self.eigenvalues / total

    def transform(self, fd, method: str = "NumInt") -> np.ndarray:
        return ufpca_scores(self, fd, method)

    def inverse_transform(self, scores) -> DenseFD:
        scores = np.atleast_2d(scores)
        values = self.mean + scores @ self.eigenfunctions[: scores.shape[1]]
        return DenseFD({"input_dim_0": self.argvals}, values)


def ufpca_fit(
    fd,
    n_comp: Union[int, float] = 0.99,
    smoother: Optional[Smoother] = None,
    smooth_cov: Optional[bool] = None,
    cov_bandwidth: Optional[float] = None,
    cov_fill: str = "diagonal",
) -> UfpcaModel:
    """Eigen-decomposition of the estimated covariance of 1-D functional data.

    The covariance is smoothed (diagonal correction, noise estimate) when
    ``smooth_cov`` is true; by default only irregular data or dense data
    with missing cells are smoothed. ``cov_fill='all'`` uses the smoothed
    surface everywhere instead of only on the diagonal and empty cells.
    """
    if fd.n_dim != 1:
        raise ValueError("ufpca_fit needs a one-dimensional domain")
    if fd.n_obs < 2:
        raise ValueError("FPCA needs at least two observations")
    if smooth_cov is None:
        smooth_cov = isinstance(fd, IrregularFD) or fd.has_missing
    mean = estimate_mean(fd, smoother)
    cov = estimate_covariance(fd, smoother, smooth=smooth_cov, bandwidth=cov_bandwidth,
                              fill=cov_fill)
    values, functions, n_clipped = cov.eigen()
    positive = values > max(values[0], 0) * values.size * np.finfo(float).eps
    spectrum = values[positive]
    j = select_n_components(spectrum, n_comp)
    return UfpcaModel(
        argvals=cov.grid_s,
        mean=mean.values[0],
        eigenfunctions=sign_fix(functions[:j]),
        eigenvalues=spectrum[:j],
        n_comp=n_comp,
        noise_variance=cov.noise_variance or 0.0,
        spectrum=spectrum,
        n_clipped=n_clipped,
    )


def _obs_pairs(fd):
    if isinstance(fd, DenseFD):
        grid = fd.grids[0]
        for n in range(fd.n_obs):
            keep = ~np.isnan(fd.values[n])
            yield grid[keep], fd.values[n][keep]
    else:
        for n in range(fd.n_obs):
            grids, vals = fd.obs(n)
            yield grids[0], vals


def ufpca_scores(model: UfpcaModel, fd, method: str = "NumInt") -> np.ndarray:
    """Scores of each observation on the model's eigenfunctions.

    ``NumInt`` integrates the centred curve against each eigenfunction with
    the trapezoid rule on the observation's own points. ``PACE`` uses the
    conditional expectation ``Lambda Phi' Sigma^-1 (Y - mu)`` with
    ``Sigma = Phi Lambda Phi' + sigma^2 I`` on the observation's points.
    """
    if method not in SCORE_METHODS:
        raise ValueError(f"unknown score method {method!r}; expected one of {SCORE_METHODS}")
    grid = model.argvals
    phi = model.eigenfunctions
    dense_fast = (
        isinstance(fd, DenseFD) and not fd.has_missing
        and fd.grids[0].shape == grid.shape and np.array_equal(fd.grids[0], grid)
    )
    if method == "NumInt" and dense_fast:
        w = trapezoid_weights(grid)
        return ((fd.values - model.mean) * w) @ phi.T
    lo, hi = grid[0], grid[-1]
    scores = np.empty((fd.n_obs, phi.shape[0]))
    for n, (t, y) in enumerate(_obs_pairs(fd)):
        if t[0] < lo - 1e-12 * (hi - lo) or t[-1] > hi + 1e-12 * (hi - lo):
            raise ValueError(f"observation {n} is sampled outside the model domain")
        mu = np.interp(t, grid, model.mean)
        basis = np.array([np.interp(t, grid, f) for f in phi])
        if method == "NumInt":
            if t.size < 2:
                raise ValueError(f"observation {n} has fewer than two points for NumInt")
            scores[n] = basis @ ((y - mu) * trapezoid_weights(t))
        else:
            lam = model.eigenvalues
            sigma = (basis.T * lam) @ basis
            sigma[np.diag_indices_from(sigma)] += model.noise_variance
            ridge = 1e-10 * np.trace(sigma)
            sigma[np.diag_indices_from(sigma)] += ridge if ridge > 0 else 1e-10
            try:
                sol = np.linalg.solve(sigma, y - mu)
            except np.linalg.LinAlgError:
                raise ValueError(f"singular PACE covariance for observation {n}") from None
            scores[n] = lam * (basis @ sol)
    return scores


@dataclass
class FcptpaModel:
    """Rank-J CP decomposition of centred images ``sum_j lambda_j u_j x v_j x w_j``."""

    argvals: List[np.ndarray]
    mean: np.ndarray
    weights: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    alphas: np.ndarray
    degenerate: List[bool] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def eigenimages(self) -> np.ndarray:
        return np.einsum("js,jt->jst", self.v, self.w)

    @property
    def scores(self) -> np.ndarray:
        """Training scores ``lambda_j u_j`` as an (N, J) array."""
        return (self.weights[:, None] * self.u).T

    def transform(self, fd, method: str = "NumInt") -> np.ndarray:
        """Least-squares coefficients of the centred images on the eigenimages."""
        values = _image_values(fd, self.argvals)
        basis = self.eigenimages.reshape(self.n_components, -1)
        centered = (values - self.mean).reshape(values.shape[0], -1)
        gram = basis @ basis.T
        return np.linalg.solve(gram, basis @ centered.T).T

    def inverse_transform(self, scores) -> DenseFD:
        scores = np.atleast_2d(scores)
        values = self.mean + np.einsum("nj,jst->nst", scores, self.eigenimages[: scores.shape[1]])
        return DenseFD({"input_dim_0": self.argvals[0], "input_dim_1": self.argvals[1]}, values)


def _image_values(fd, argvals) -> np.ndarray:
    if not isinstance(fd, DenseFD) or fd.n_dim != 2:
        raise ValueError("FCP-TPA needs dense two-dimensional data")
    if fd.has_missing:
        raise ValueError("FCP-TPA does not handle missing cells")
    for g, ref in zip(fd.grids, argvals):
        if g.shape != ref.shape or not np.allclose(g, ref):
            raise ValueError("image grid does not match the model grid")
    return fd.values


def _second_difference(n: int) -> np.ndarray:
    if n < 3:
        return np.zeros((0, n))
    d = np.zeros((n - 2, n))
    i = np.arange(n - 2)
    d[i, i], d[i, i + 1], d[i, i + 2] = 1.0, -2.0, 1.0
    return d


class _Penalty:
    """Smoothing operator ``(I + alpha D'D)^-1`` with GCV choice of alpha."""

    def __init__(self, n: int, alpha_range):
        d = _second_difference(n)
        self.eig, self.q = np.linalg.eigh(d.T @ d)
        self.eig = np.clip(self.eig, 0, None)
        lo, hi = alpha_range
        if lo < 0 or hi < lo:
            raise ValueError("alpha range must satisfy 0 <= lo <= hi")
        if hi == 0:
            self.candidates = np.zeros(1)
        else:
            self.candidates = np.geomspace(max(lo, hi * 1e-8), hi, 25)
        self.n = n

    def apply(self, b: np.ndarray):
        coef = self.q.T @ b
        if self.candidates.size == 1:
            alpha = float(self.candidates[0])
        else:
            best = np.inf
            alpha = float(self.candidates[0])
            for a in self.candidates:
                shrink = 1 / (1 + a * self.eig)
                resid = np.sum(((1 - shrink) * coef) ** 2) / self.n
                denom = (1 - shrink.sum() / self.n) ** 2
                score = resid / denom if denom > 0 else np.inf
                if score < best:
                    best, alpha = score, float(a)
        return self.q @ (coef / (1 + alpha * self.eig)), alpha


def _unit(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x)
    return x / norm if norm > 0 else x


def _leading_singular(mat: np.ndarray) -> np.ndarray:
    u, _, _ = np.linalg.svd(mat, full_matrices=False)
    return u[:, 0]


def fcptpa_fit(
    fd: DenseFD,
    n_comp: int,
    alpha_v=(0.0, 0.0),
    alpha_w=(0.0, 0.0),
    max_iter: int = 500,
    tol: float = 1e-8,
    center: bool = True,
) -> FcptpaModel:
    """Functional CP tensor power algorithm with rank-one deflation.

    Each component alternates the updates u, v, w (v and w optionally
    smoothed with a second-difference penalty whose weight is chosen by GCV
    inside the given range) until the relative change of lambda is at most
    ``tol``; the component is then subtracted from the residual tensor.
    Components are returned in decreasing order of lambda.
    """
    if not isinstance(fd, DenseFD) or fd.n_dim != 2:
        raise ValueError("fcptpa_fit needs dense two-dimensional data")
    if fd.n_obs < 2:
        raise ValueError("FCP-TPA needs at least two observations")
    if n_comp < 1 or int(n_comp) != n_comp:
        raise ValueError("FCP-TPA needs an integer number of components >= 1")
    x = np.array(fd.values, dtype=float)
    if np.any(np.isnan(x)):
        raise ValueError("FCP-TPA does not handle missing cells")
    n, sx, sy = x.shape
    if n_comp > min(n, sx, sy):
        raise ValueError(f"rank {n_comp} exceeds the smallest tensor dimension {min(n, sx, sy)}")
    mean = x.mean(axis=0) if center else np.zeros((sx, sy))
    resid = x - mean
    pen_v, pen_w = _Penalty(sx, alpha_v), _Penalty(sy, alpha_w)
    scale = np.linalg.norm(resid)
    lams, us, vs, ws, alphas, degenerate = [], [], [], [], [], []
    for j in range(int(n_comp)):
        if np.linalg.norm(resid) <= 1e-13 * max(scale, 1.0):
            lams.append(0.0)
            us.append(np.eye(n)[0]), vs.append(np.eye(sx)[0]), ws.append(np.eye(sy)[0])
            alphas.append((0.0, 0.0))
            degenerate.append(True)
            continue
        v = _leading_singular(resid.transpose(1, 0, 2).reshape(sx, -1))
        w = _leading_singular(resid.transpose(2, 0, 1).reshape(sy, -1))
        lam_old = None
        for _ in range(max_iter):
            u = _unit(np.einsum("nst,s,t->n", resid, v, w))
            v, a_v = pen_v.apply(np.einsum("nst,n,t->s", resid, u, w))
            v = _unit(v)
            w, a_w = pen_w.apply(np.einsum("nst,n,s->t", resid, u, v))
            w = _unit(w)
            lam = float(np.einsum("nst,n,s,t->", resid, u, v, w))
            if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
                break
            lam_old = lam
        else:
            raise ConvergenceError(f"FCP-TPA component {j + 1} did not converge in {max_iter} iterations")
        if lam < 0:
            lam, u = -lam, -u
        sv, sw_ = np.sign(v[np.argmax(np.abs(v))]), np.sign(w[np.argmax(np.abs(w))])
        v, w, u = v * sv, w * sw_, u * sv * sw_
        resid = resid - lam * np.einsum("n,s,t->nst", u, v, w)
        lams.append(lam), us.append(u), vs.append(v), ws.append(w)
        alphas.append((a_v, a_w))
        degenerate.append(False)
    order = np.argsort(-np.abs(np.array(lams)), kind="stable")
    return FcptpaModel(
        argvals=[g.copy() for g in fd.grids],
        mean=mean,
        weights=np.array(lams)[order],
        u=np.array(us)[order],
        v=np.array(vs)[order],
        w=np.array(ws)[order],
        alphas=np.array(alphas, dtype=float)[order],
        degenerate=[degenerate[i] for i in order],
    )


UnivariateBasis = Union[UfpcaModel, FcptpaModel]


@dataclass
class MfpcaModel:
    """Multivariate FPCA built on per-component expansions.

    ``eigenvectors`` holds the eigenvectors of the stacked-score covariance
    as columns; ``eigenfunctions[p]`` has shape (J+, *grid_p).
    """

    components: List[UnivariateBasis]
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    method: str = "NumInt"
    stacked_scores: Optional[np.ndarray] = None
    scores: Optional[np.ndarray] = None
    n_clipped: int = 0
    eigenfunctions: List[np.ndarray] = field(init=False)

    def __post_init__(self):
        self.eigenfunctions = []
        start = 0
        for comp in self.components:
            stop = start + comp.n_components
            block = self.eigenvectors[start:stop]
            basis = comp.eigenfunctions if isinstance(comp, UfpcaModel) else comp.eigenimages
            self.eigenfunctions.append(np.tensordot(block.T, basis, axes=1))
            start = stop

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    @property
    def block_sizes(self) -> List[int]:
        return [c.n_components for c in self.components]

    @property
    def means(self) -> List[np.ndarray]:
        return [c.mean for c in self.components]

    def transform(self, fd) -> np.ndarray:
        return mfpca_transform(self, fd)

    def inverse_transform(self, scores) -> MultivariateFD:
        return mfpca_inverse_transform(self, scores)


def _expand_n_comp(n_comp, p: int) -> List:
    if isinstance(n_comp, (int, float, np.integer, np.floating)):
        return [n_comp] * p
    n_comp = list(n_comp)
    if len(n_comp) != p:
        raise ValueError(f"n_comp has {len(n_comp)} entries for {p} components")
    return n_comp


def _stack_scores(components, fd: MultivariateFD, method: str) -> np.ndarray:
    if len(fd) != len(components):
        raise ValueError(f"data has {len(fd)} components, model has {len(components)}")
    return np.hstack([c.transform(x, method) for c, x in zip(components, fd)])


def mfpca_fit(
    fd,
    n_comp=0.99,
    method: str = "NumInt",
    smoother: Optional[Smoother] = None,
    smooth_cov: Optional[bool] = None,
    fcptpa_options: Optional[dict] = None,
    cov_fill: str = "diagonal",
) -> MfpcaModel:
    """Multivariate FPCA by eigen-analysis of the stacked univariate scores.

    One-dimensional components are expanded with :func:`ufpca_fit`,
    two-dimensional ones with :func:`fcptpa_fit` (``n_comp`` must then be an
    integer rank). The stacked score matrix ``Z`` (N x J+) gives the matrix
    ``Z'Z / N`` whose eigenvectors combine the univariate eigenfunctions.
    """
    if method not in SCORE_METHODS:
        raise ValueError(f"unknown score method {method!r}")
    fd = as_multivariate(fd)
    n_comps = _expand_n_comp(n_comp, len(fd))
    components: List[UnivariateBasis] = []
    for p, (comp, nc) in enumerate(zip(fd, n_comps)):
        if comp.n_dim == 1:
            components.append(ufpca_fit(comp, nc, smoother=smoother, smooth_cov=smooth_cov,
                                        cov_fill=cov_fill))
        elif comp.n_dim == 2:
            components.append(fcptpa_fit(comp, nc, **(fcptpa_options or {})))
        else:
            raise ValueError(f"component {p}: unsupported domain dimension {comp.n_dim}")
    stacked = _stack_scores(components, fd, method)
    if stacked.shape[1] == 0:
        raise ValueError("no univariate component retained")
    gram = stacked.T @ stacked / stacked.shape[0]
    values, vectors = np.linalg.eigh(0.5 * (gram + gram.T))
    values, vectors = values[::-1], vectors[:, ::-1]
    n_clipped = int(np.sum(values < 0))
    values = np.where(values < 0, 0.0, values)
    model = MfpcaModel(components, values, vectors, method, stacked, n_clipped=n_clipped)
    # sign convention on the concatenated multivariate eigenfunctions
    flat = np.hstack([f.reshape(f.shape[0], -1) for f in model.eigenfunctions])
    idx = np.argmax(np.abs(flat), axis=1)
    signs = np.sign(flat[np.arange(flat.shape[0]), idx])
    signs[signs == 0] = 1.0
    model = MfpcaModel(components, values, vectors * signs, method, stacked, n_clipped=n_clipped)
    model.scores = stacked @ model.eigenvectors
    return model


def mfpca_transform(model: MfpcaModel, fd) -> np.ndarray:
    """Multivariate scores: stacked univariate scores times the eigenvectors."""
    fd = as_multivariate(fd)
    return _stack_scores(model.components, fd, model.method) @ model.eigenvectors


def mfpca_inverse_transform(model: MfpcaModel, scores) -> MultivariateFD:
    """Truncated multivariate Karhunen-Loeve reconstruction."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    k = scores.shape[1]
    if k > model.n_components:
        raise ValueError(f"{k} scores given, model has {model.n_components} components")
    out = []
    for comp, funcs in zip(model.components, model.eigenfunctions):
        values = comp.mean + np.tensordot(scores, funcs[:k], axes=1)
        if isinstance(comp, UfpcaModel):
            argvals = {"input_dim_0": comp.argvals}
        else:
            argvals = {"input_dim_0": comp.argvals[0], "input_dim_1": comp.argvals[1]}
        out.append(DenseFD(argvals, values))
    return MultivariateFD(out)


def _tolist(x):
    return np.asarray(x, dtype=float).tolist()


def model_to_dict(model: MfpcaModel) -> dict:
    comps = []
    for c in model.components:
        if isinstance(c, UfpcaModel):
            comps.append({
                "type": "ufpca",
                "argvals": [_tolist(c.argvals)],
                "mean": _tolist(c.mean),
                "eigenfunctions": _tolist(c.eigenfunctions),
                "eigenvalues": _tolist(c.eigenvalues),
                "noise_variance": float(c.noise_variance),
                "n_comp": c.n_comp,
            })
        else:
            comps.append({
                "type": "fcptpa",
                "argvals": [_tolist(g) for g in c.argvals],
                "mean": _tolist(c.mean),
                "weights": _tolist(c.weights),
                "u": _tolist(c.u),
                "v": _tolist(c.v),
                "w": _tolist(c.w),
                "alphas": _tolist(c.alphas),
            })
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "method": model.method,
        "eigenvalues": _tolist(model.eigenvalues),
        "eigenvectors": _tolist(model.eigenvectors),
        "components": comps,
    }


def model_from_dict(doc: dict) -> MfpcaModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a serialized MFPCA model")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    comps: List[UnivariateBasis] = []
    for c in doc["components"]:
        if c["type"] == "ufpca":
            comps.append(UfpcaModel(
                argvals=np.array(c["argvals"][0]),
                mean=np.array(c["mean"]),
                eigenfunctions=np.array(c["eigenfunctions"]).reshape(len(c["eigenvalues"]), -1),
                eigenvalues=np.array(c["eigenvalues"]),
                n_comp=c["n_comp"],
                noise_variance=c["noise_variance"],
            ))
        elif c["type"] == "fcptpa":
            j = len(c["weights"])
            comps.append(FcptpaModel(
                argvals=[np.array(g) for g in c["argvals"]],
                mean=np.array(c["mean"]),
                weights=np.array(c["weights"]),
                u=np.array(c["u"]).reshape(j, -1),
                v=np.array(c["v"]).reshape(j, -1),
                w=np.array(c["w"]).reshape(j, -1),
                alphas=np.array(c["alphas"]).reshape(j, 2),
            ))
        else:
            raise ValueError(f"unknown component type {c['type']!r}")
    j_plus = sum(c.n_components for c in comps)
    return MfpcaModel(
        components=comps,
        eigenvalues=np.array(doc["eigenvalues"]),
        eigenvectors=np.array(doc["eigenvectors"]).reshape(j_plus, j_plus),
        method=doc["method"],
    )


def save_model(model: MfpcaModel, path) -> None:
    """Write the model as version-tagged JSON (floats round-trip exactly)."""
    atomic_write_text(path, json.dumps(model_to_dict(model)) + "\n")


def load_model(path) -> MfpcaModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
