"""Mixtures of matrix-variate regressions with and without cluster weights.

A finite mixture over pairs of matrices (Y, X): each component carries a
matrix-variate law for the covariates X (optional) and a matrix-variate
regression for the responses Y given X.  Either side may follow the
matrix normal or one of four skewed normal mean-variance families
(skew-t, generalized hyperbolic, variance-gamma, normal-inverse-
Gaussian).  Models are fitted by multi-start ECM and compared by BIC.

Main entry points: :func:`fit` / :func:`run_selection` for the
functional interface, :class:`MatrixCWM` / :class:`MatrixFMR` for the
estimator interface, and the ``mvcwm`` command line for file-based work.
"""

from .densities import (
    Family,
    GhTail,
    MatrixLaw,
    NigTail,
    SkewTTail,
    VgTail,
    log_density,
)
from .ecm import (
    ComponentCollapseError,
    ComponentParams,
    DegenerateLikelihoodError,
    FitControls,
    FitResult,
    MatrixData,
    ModelFitError,
    ModelParams,
    ModelSpec,
    SingularDesignError,
    e_step,
    fit,
    observed_loglik,
)
from .estimators import MatrixCWM, MatrixFMR, as_matrix_data
from .evaluate import (
    SelectionReport,
    SelectionRow,
    adjusted_rand_index,
    bic,
    count_free_params,
    mse_coefficients,
    run_selection,
)
from .fmr import FmrSpec, fit_fmr
from .simulate import (
    Scenario,
    builtin_scenarios,
    classification_study,
    make_truth,
    recovery_study,
    sample_cwm,
    skew_transform,
    summarize_study,
)
from .specialfn import NotPositiveDefiniteError, SpdFactor, spd_factorize

__version__ = "0.1.0"

__all__ = [
    "Family",
    "MatrixLaw",
    "SkewTTail",
    "GhTail",
    "VgTail",
    "NigTail",
    "log_density",
    "MatrixData",
    "ModelSpec",
    "ModelParams",
    "ComponentParams",
    "FitControls",
    "FitResult",
    "ModelFitError",
    "ComponentCollapseError",
    "SingularDesignError",
    "DegenerateLikelihoodError",
    "NotPositiveDefiniteError",
    "SpdFactor",
    "spd_factorize",
    "fit",
    "e_step",
    "observed_loglik",
    "FmrSpec",
    "fit_fmr",
    "MatrixCWM",
    "MatrixFMR",
    "as_matrix_data",
    "count_free_params",
    "bic",
    "adjusted_rand_index",
    "mse_coefficients",
    "SelectionRow",
    "SelectionReport",
    "run_selection",
    "Scenario",
    "builtin_scenarios",
    "make_truth",
    "sample_cwm",
    "skew_transform",
    "classification_study",
    "recovery_study",
    "summarize_study",
    "__version__",
]
