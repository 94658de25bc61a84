"""Class-prior estimation from positive and unlabeled data by penalized
divergence matching, with reference baselines and a PU classifier."""

__version__ = "0.1.0"

from .core import BasisSpec, BetaVector, Dataset, build_basis, compute_beta
from .data_io import (
    LabeledTable,
    SyntheticSpec,
    bayes_error,
    generate_synthetic,
    load_csv,
    make_pu_split,
    pca_reduce,
    write_csv,
)
from .divergences import Divergence, DivergenceSpec, conjugate_subgradient, conjugate_value
from .errors import (
    ConvergenceError,
    DataError,
    DegenerateClassifierError,
    DomainError,
    InvalidParameterError,
    PUPriorError,
    ShapeError,
    WindowError,
)
from .estimators import (
    DualSolution,
    PriorEstimate,
    dual_estimate,
    estimate_prior,
    l1_qp_estimate,
    pen_l1_alpha,
    pen_l1_estimate,
    theta_grid,
)
from .baselines import en_prior, pe_prior, roc_curve, sb_prior
from .model_selection import CVConfig, Method, Objective, select_hyperparams
from .ratio_classifier import RatioModel, classify, fit_ratio, fit_ratio_cv, misclassification_rate
from .experiments import (
    ExperimentReport,
    RateFit,
    fit_rate,
    run_benchmark,
    run_converge,
    run_deviation,
    run_synth,
)

__all__ = [
    "__version__",
    "BasisSpec",
    "BetaVector",
    "Dataset",
    "build_basis",
    "compute_beta",
    "LabeledTable",
    "SyntheticSpec",
    "bayes_error",
    "generate_synthetic",
    "load_csv",
    "make_pu_split",
    "pca_reduce",
    "write_csv",
    "Divergence",
    "DivergenceSpec",
    "conjugate_subgradient",
    "conjugate_value",
    "ConvergenceError",
    "DataError",
    "DegenerateClassifierError",
    "DomainError",
    "InvalidParameterError",
    "PUPriorError",
    "ShapeError",
    "WindowError",
    "DualSolution",
    "PriorEstimate",
    "dual_estimate",
    "estimate_prior",
    "l1_qp_estimate",
    "pen_l1_alpha",
    "pen_l1_estimate",
    "theta_grid",
    "en_prior",
    "pe_prior",
    "roc_curve",
    "sb_prior",
    "CVConfig",
    "Method",
    "Objective",
    "select_hyperparams",
    "RatioModel",
    "classify",
    "fit_ratio",
    "fit_ratio_cv",
    "misclassification_rate",
    "ExperimentReport",
    "RateFit",
    "fit_rate",
    "run_benchmark",
    "run_converge",
    "run_deviation",
    "run_synth",
]
