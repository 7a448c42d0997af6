"""Multi-kernel learning: weighted kernel combinations fit by alternating
optimization or evidence maximization, with numerically verified
correspondences between weight-penalty and block-norm regularizers."""

from .bayes import (
    BayesOptions,
    BayesState,
    bayes_h_value,
    fit_bayes,
    mackay_d_step,
    mackay_f_step,
    neg_log_marginal,
    split_objective,
)
from .conjcheck import (
    ConjugateReport,
    GridSpec,
    bayes_g_numeric,
    numeric_conjugate_g,
    numeric_conjugate_h,
    run_conjugacy_suite,
    variational_norm,
    wedge_g_numeric,
    wedge_weight_step,
)
from .errors import MklError, NumericalError, ValidationError
from .gram import (
    KernelBank,
    build_bank,
    build_cross_gram,
    build_gram,
    build_multitask_bank,
    build_overlap_linear_kernels,
    check_psd,
    chi2_kernel,
    combine,
    dataset_fingerprint,
    gaussian_kernel,
    load_bank_manifest,
    load_csv_dataset,
)
from .regfam import (
    BLOCK_NORM,
    FAMILIES,
    KERNEL_WEIGHT,
    PRUNE_THRESHOLD,
    RegularizerSpec,
    conjugate_pair,
    g_value,
    h_value,
    is_convex_h,
    is_separable,
    optimal_weights,
)
from .solver import (
    FitOptions,
    FitTrace,
    LossSpec,
    MklModel,
    block_norm_objective,
    f_step,
    fit,
    predict,
)

__version__ = "0.1.0"

__all__ = [
    "BLOCK_NORM",
    "BayesOptions",
    "BayesState",
    "ConjugateReport",
    "FAMILIES",
    "FitOptions",
    "FitTrace",
    "GridSpec",
    "KERNEL_WEIGHT",
    "KernelBank",
    "LossSpec",
    "MklError",
    "MklModel",
    "NumericalError",
    "PRUNE_THRESHOLD",
    "RegularizerSpec",
    "ValidationError",
    "bayes_g_numeric",
    "bayes_h_value",
    "block_norm_objective",
    "build_bank",
    "build_cross_gram",
    "build_gram",
    "build_multitask_bank",
    "build_overlap_linear_kernels",
    "check_psd",
    "chi2_kernel",
    "combine",
    "conjugate_pair",
    "dataset_fingerprint",
    "f_step",
    "gaussian_kernel",
    "fit",
    "fit_bayes",
    "g_value",
    "h_value",
    "is_convex_h",
    "is_separable",
    "load_bank_manifest",
    "load_csv_dataset",
    "mackay_d_step",
    "mackay_f_step",
    "neg_log_marginal",
    "numeric_conjugate_g",
    "numeric_conjugate_h",
    "optimal_weights",
    "predict",
    "run_conjugacy_suite",
    "split_objective",
    "variational_norm",
    "wedge_g_numeric",
    "wedge_weight_step",
]
