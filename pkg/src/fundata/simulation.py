"""Simulation of functional data.

Random numbers come from NumPy's ``PCG64`` bit generator seeded with
``numpy.random.default_rng(seed)``. Each simulation call draws from its own
generator in a fixed order (cluster labels, then scores, then paths), so a
given seed produces bit-identical output on every platform that ships the
same NumPy version. Noise and sparsification take their own seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import eval_legendre

from .core import DenseFD, IrregularFD, check_grid
from .quadrature import gram_matrix, orthonormalize_rows

BASIS_NAMES = ("legendre", "wiener", "fourier", "bsplines")
DECAY_KINDS = ("linear", "exponential", "wiener")


@dataclass
class Basis:
    """Basis functions evaluated on a grid.

    ``values`` has shape (J, M) for one-dimensional grids and (J, M1, M2)
    for tensor-product bases.
    """

    name: str
    argvals: Dict[str, np.ndarray]
    values: np.ndarray

    @property
    def n_functions(self) -> int:
        return self.values.shape[0]

    @property
    def n_dim(self) -> int:
        return len(self.argvals)

    @property
    def grids(self):
        return list(self.argvals.values())

    def gram(self) -> np.ndarray:
        return gram_matrix(self.values, self.grids)

    def orthonormalized(self) -> "Basis":
        """Gram-Schmidt under the trapezoidal inner product."""
        return Basis(self.name, self.argvals, orthonormalize_rows(self.values, self.grids))

    def as_fd(self) -> DenseFD:
        return DenseFD(self.argvals, self.values)


def _legendre(j: int, grid: np.ndarray) -> np.ndarray:
    a, b = grid[0], grid[-1]
    x = 2 * (grid - a) / (b - a) - 1
    rows = np.array([np.sqrt((2 * k + 1) / (b - a)) * eval_legendre(k, x) for k in range(j)])
    # high degrees lose trapezoid orthogonality on coarse grids
    return orthonormalize_rows(rows, [grid])


def _wiener(j: int, grid: np.ndarray) -> np.ndarray:
    a, b = grid[0], grid[-1]
    x = (grid - a) / (b - a)
    k = np.arange(1, j + 1)[:, None]
    return np.sqrt(2 / (b - a)) * np.sin((k - 0.5) * np.pi * x)


def _fourier(j: int, grid: np.ndarray) -> np.ndarray:
    a, b = grid[0], grid[-1]
    x = (grid - a) / (b - a)
    rows = [np.full_like(x, 1 / np.sqrt(b - a))]
    k = 1
    while len(rows) < j:
        rows.append(np.sqrt(2 / (b - a)) * np.sin(2 * np.pi * k * x))
        if len(rows) < j:
            rows.append(np.sqrt(2 / (b - a)) * np.cos(2 * np.pi * k * x))
        k += 1
    return np.array(rows)


def _bsplines(j: int, grid: np.ndarray) -> np.ndarray:
    degree = min(3, j - 1)
    a, b = grid[0], grid[-1]
    inner = np.linspace(a, b, j - degree + 1)
    knots = np.concatenate([np.repeat(a, degree), inner, np.repeat(b, degree)])
    rows = BSpline(knots, np.eye(j), degree)(grid).T
    return orthonormalize_rows(rows, [grid])


def make_basis(name: str, n_functions: int, argvals, orthonormalize: bool = False) -> Basis:
    """Evaluate ``n_functions`` orthonormal functions of a named family.

    Parameters
    ----------
    name : {'legendre', 'wiener', 'fourier', 'bsplines'}
    n_functions : int
    argvals : array-like
        One-dimensional sampling grid with at least two points.
    orthonormalize : bool
        Apply an explicit Gram-Schmidt step under trapezoidal quadrature.
        Legendre polynomials and cubic B-splines are always orthonormalized
        this way.
    """
    if n_functions < 1:
        raise ValueError("n_functions must be at least 1")
    grid = check_grid(argvals)
    if grid.size < 2:
        raise ValueError("a basis needs at least two grid points")
    if name == "legendre":
        if n_functions > grid.size:
            raise ValueError(f"{n_functions} polynomials exceed {grid.size} grid points")
        values = _legendre(n_functions, grid)
    elif name == "wiener":
        values = _wiener(n_functions, grid)
    elif name == "fourier":
        values = _fourier(n_functions, grid)
    elif name == "bsplines":
        if n_functions > grid.size:
            raise ValueError(
                f"{n_functions} B-splines cannot be orthonormalized on {grid.size} points"
            )
        values = _bsplines(n_functions, grid)
    else:
        raise ValueError(f"unknown basis {name!r}; expected one of {BASIS_NAMES}")
    basis = Basis(name, {"input_dim_0": grid}, values)
    return basis.orthonormalized() if orthonormalize else basis


def tensor_basis_2d(basis_x: Basis, basis_y: Basis) -> Basis:
    """Products phi_i(s) psi_j(t), ordered with j varying fastest."""
    if basis_x.n_dim != 1 or basis_y.n_dim != 1:
        raise ValueError("tensor products need two one-dimensional bases")
    values = np.einsum("is,jt->ijst", basis_x.values, basis_y.values)
    values = values.reshape(-1, *values.shape[2:])
    argvals = {"input_dim_0": basis_x.grids[0], "input_dim_1": basis_y.grids[0]}
    return Basis(f"{basis_x.name}x{basis_y.name}", argvals, values)


@dataclass
class EigenDecay:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("eigenvalues must be a non-empty vector")
        if np.any(self.values < 0) or np.any(np.diff(self.values) > 0):
            raise ValueError("eigenvalues must be non-negative and non-increasing")


def decay_values(kind: Union[str, Sequence[float]], n_functions: int = None) -> EigenDecay:
    """Eigenvalue sequences: linear, exponential, Wiener or user-supplied.

    linear ``(J - j + 1) / J``, exponential ``exp(-(j + 1) / 2)`` and wiener
    ``1 / ((j - 1/2) pi)^2`` for j = 1..J.
    """
    if not isinstance(kind, str):
        return EigenDecay("user", kind)
    if n_functions is None or n_functions < 1:
        raise ValueError("n_functions must be at least 1")
    j = np.arange(1, n_functions + 1, dtype=float)
    if kind == "linear":
        values = (n_functions - j + 1) / n_functions
    elif kind == "exponential":
        values = np.exp(-(j + 1) / 2)
    elif kind == "wiener":
        values = 1 / ((j - 0.5) * np.pi) ** 2
    else:
        raise ValueError(f"unknown decay {kind!r}; expected one of {DECAY_KINDS}")
    return EigenDecay(kind, values)


@dataclass
class ClusterSpec:
    """Functional mixture: per-cluster mean coefficients and score spreads.

    ``centers`` and ``cluster_std`` have shape (J, K): rows index basis
    functions, columns clusters.
    """

    centers: np.ndarray
    cluster_std: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.cluster_std = np.atleast_2d(np.asarray(self.cluster_std, dtype=float))
        if self.centers.shape != self.cluster_std.shape:
            raise ValueError("centers and cluster_std must have the same (J, K) shape")
        if np.any(self.cluster_std < 0):
            raise ValueError("cluster_std must be non-negative")
        k = self.centers.shape[1]
        if self.weights is None:
            self.weights = np.full(k, 1 / k)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (k,) or np.any(self.weights <= 0):
            raise ValueError("weights must be K positive numbers")
        if not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("weights must sum to 1")

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[1]

    @property
    def n_functions(self) -> int:
        return self.centers.shape[0]

    @classmethod
    def from_decay(cls, centers, decay: str = "exponential", weights=None) -> "ClusterSpec":
        """``cluster_std='exponential'`` shorthand: the decay in every cluster."""
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        lam = decay_values(decay, centers.shape[0]).values
        std = np.repeat(np.sqrt(lam)[:, None], centers.shape[1], axis=1)
        return cls(centers, std, weights)


@dataclass
class SimOutput:
    """Simulated data with optional noisy and sparse versions."""

    data: DenseFD
    labels: Optional[np.ndarray] = None
    basis: Optional[Basis] = None
    coefficients: Optional[np.ndarray] = None
    noisy_data: Optional[DenseFD] = None
    sparse_data: Optional[IrregularFD] = None
    extra: dict = field(default_factory=dict)

    def add_noise(self, var_noise, seed=None) -> None:
        add_noise(self, var_noise, seed)

    def sparsify(self, percentage: float, epsilon: float = 0.0, seed=None) -> None:
        sparsify(self, percentage, epsilon, seed)


def simulate_kl(
    basis: Basis,
    decay: Union[EigenDecay, ClusterSpec, str],
    n_obs: int,
    seed=None,
    mean: Optional[np.ndarray] = None,
) -> SimOutput:
    """Sample curves from a truncated Karhunen-Loeve expansion.

    Without clusters the scores are independent ``N(0, lambda_j)``. With a
    ``ClusterSpec`` a label ``Z ~ Categorical(weights)`` is drawn first and
    the coefficient of function j is ``N(centers[j, Z], std[j, Z]^2)``.
    ``coefficients`` stores the centred scores (without cluster means).
    """
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    rng = np.random.default_rng(seed)
    j = basis.n_functions
    if isinstance(decay, str):
        decay = decay_values(decay, j)
    labels = None
    if isinstance(decay, ClusterSpec):
        if decay.n_functions != j:
            raise ValueError(
                f"cluster parameters describe {decay.n_functions} functions, basis has {j}"
            )
        labels = rng.choice(decay.n_clusters, size=n_obs, p=decay.weights)
        std = decay.cluster_std[:, labels].T
        scores = rng.standard_normal((n_obs, j)) * std
        coefs = decay.centers[:, labels].T + scores
    else:
        if decay.values.size != j:
            raise ValueError(f"{decay.values.size} eigenvalues for {j} basis functions")
        scores = rng.standard_normal((n_obs, j)) * np.sqrt(decay.values)
        coefs = scores
    flat = basis.values.reshape(j, -1)
    values = (coefs @ flat).reshape((n_obs,) + basis.values.shape[1:])
    if mean is not None:
        values = values + np.asarray(mean, dtype=float)
    return SimOutput(
        data=DenseFD(basis.argvals, values),
        labels=labels,
        basis=basis,
        coefficients=scores,
    )


def fbm_covariance(grid: np.ndarray, hurst: float) -> np.ndarray:
    s, t = np.meshgrid(grid, grid, indexing="ij")
    h2 = 2 * hurst
    return 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)


def simulate_brownian(
    kind: str,
    n_obs: int,
    argvals,
    hurst: float = 0.5,
    drift: float = 0.0,
    sigma: float = 1.0,
    x0: float = 1.0,
    seed=None,
) -> SimOutput:
    """Standard, fractional or geometric Brownian paths on a grid of t >= 0.

    The process starts at 0 at time 0, so a grid starting at 0 gives
    ``X(0) = 0`` (``x0`` for geometric motion). Fractional paths are drawn
    through a Cholesky factor of the exact covariance.
    """
    grid = check_grid(argvals)
    if grid[0] < 0:
        raise ValueError("Brownian grids must lie in [0, inf)")
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    rng = np.random.default_rng(seed)
    if kind in ("standard", "geometric"):
        steps = np.diff(np.concatenate([[0.0], grid]))
        paths = np.cumsum(rng.standard_normal((n_obs, grid.size)) * np.sqrt(steps), axis=1)
        if kind == "geometric":
            if sigma < 0:
                raise ValueError("sigma must be non-negative")
            paths = x0 * np.exp((drift - sigma ** 2 / 2) * grid + sigma * paths)
    elif kind == "fractional":
        if not 0 < hurst < 1:
            raise ValueError("hurst must lie in (0, 1)")
        positive = grid > 0
        paths = np.zeros((n_obs, grid.size))
        if positive.any():
            cov = fbm_covariance(grid[positive], hurst)
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ValueError("fBM covariance is not positive definite on this grid") from None
            paths[:, positive] = rng.standard_normal((n_obs, positive.sum())) @ chol.T
    else:
        raise ValueError(f"unknown Brownian kind {kind!r}")
    return SimOutput(data=DenseFD({"input_dim_0": grid}, paths), extra={"kind": kind})


def _noise_variance(var_noise, data: DenseFD) -> np.ndarray:
    shape = data.values.shape[1:]
    if callable(var_noise):
        grids = data.grids
        if len(grids) == 1:
            var = var_noise(grids[0])
        else:
            var = var_noise(grids[0][:, None], grids[1][None, :])
        var = np.broadcast_to(np.asarray(var, dtype=float), shape)
    else:
        var = np.asarray(var_noise, dtype=float)
        if var.ndim and var.shape != shape:
            raise ValueError(f"noise variance shape {var.shape} does not match grid {shape}")
        var = np.broadcast_to(var, shape)
    if np.any(var < 0) or not np.all(np.isfinite(var)):
        raise ValueError("noise variance must be finite and non-negative")
    return var


def add_noise(sim: SimOutput, var_noise: Union[float, Callable, np.ndarray], seed=None) -> None:
    """Fill ``sim.noisy_data`` with ``data + N(0, sigma^2(t))`` noise.

    ``var_noise`` is a scalar, a vector over the grid, or a function of the
    sampling points.
    """
    var = _noise_variance(var_noise, sim.data)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(sim.data.values.shape) * np.sqrt(var)
    sim.noisy_data = DenseFD(sim.data.argvals, sim.data.values + noise)


def sparsify(sim: SimOutput, percentage: float, epsilon: float = 0.0, seed=None) -> None:
    """Fill ``sim.sparse_data`` by removing random sampling points.

    For each observation a removal fraction ``q ~ U(p - e, p + e)`` is drawn
    and ``floor(q * M)`` distinct points are removed uniformly at random.
    """
    if not (0 <= percentage <= 1 and epsilon >= 0):
        raise ValueError("need 0 <= percentage <= 1 and epsilon >= 0")
    if percentage - epsilon < 0 or percentage + epsilon > 1:
        raise ValueError("percentage +/- epsilon must stay within [0, 1]")
    data = sim.data
    if data.n_dim != 1:
        raise ValueError("sparsify is only defined for one-dimensional domains")
    m = data.grids[0].size
    if int(np.floor((percentage + epsilon) * m)) >= m:
        raise ValueError("removal could leave an observation without points")
    rng = np.random.default_rng(seed)
    grid = data.grids[0]
    argvals, values = {}, {}
    for n in range(data.n_obs):
        q = rng.uniform(percentage - epsilon, percentage + epsilon)
        n_remove = int(np.floor(q * m))
        removed = rng.choice(m, size=n_remove, replace=False)
        keep = np.ones(m, dtype=bool)
        keep[removed] = False
        row = data.values[n]
        keep &= ~np.isnan(row)
        argvals[n] = grid[keep]
        values[n] = row[keep]
    sim.sparse_data = IrregularFD(argvals, values)

