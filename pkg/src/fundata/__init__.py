"""Functional data containers, simulation, smoothing, FPCA and clustering."""

from .core import (
    MISSING, DenseFD, FDSummary, IrregularFD, MultivariateFD, construct_dense,
    construct_irregular, construct_multivariate, iterate_obs, summary, to_dense, to_irregular,
)
from .fcubt import FcubtConfig, FcubtTree, export_tree, grow, import_tree, join, predict, predict_proba
from .fpca import (
    FcptpaModel, MfpcaModel, UfpcaModel, fcptpa_fit, load_model, mfpca_fit,
    mfpca_inverse_transform, mfpca_transform, save_model, ufpca_fit, ufpca_scores,
)
from .gmm import GmmModel, gmm_fit, gmm_posterior, gmm_select_k
from .io import (
    read_csv_dense, read_csv_irregular, read_manifest, read_ts, write_csv, write_manifest,
    write_ts,
)
from .moments import CovSurface, cross_covariance, estimate_covariance, estimate_mean
from .simulation import (
    Basis, ClusterSpec, EigenDecay, SimOutput, add_noise, decay_values, make_basis,
    simulate_brownian, simulate_kl, sparsify, tensor_basis_2d,
)
from .smoothing import (
    RankDeficientError, Smoother, estimate_bandwidth, kernel_eval, local_poly_fit,
    local_poly_smooth, smooth_fd,
)

__version__ = "0.1.0"
