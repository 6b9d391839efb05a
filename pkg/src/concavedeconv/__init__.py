"""Nonparametric deconvolution under a concave distribution function.

Observations are ``Z = X + eps`` with ``eps`` drawn from a known noise
density and ``X`` from an unknown distribution function that is concave on
``[0, inf)``.  Two estimators are provided: the maximum likelihood estimator
of ``F`` (:func:`fit_mle`) and a least squares estimator of the survival
function ``1 - F`` (:func:`fit_lse`).
"""
from .asymptotics import (
    LocalQuantities,
    RateStudyConfig,
    hellinger,
    hellinger_limit_constant,
    hellinger_perturbation,
    local_quantities,
    lse_constants,
    minimax_bound_T1,
    minimax_bound_T2,
    perturb,
    rate_study,
    richardson_zero,
)
from .errors import (
    DeconvError,
    DivergentSolve,
    MissingKappa,
    NotConverged,
    OutOfHorizon,
    PerturbationInfeasible,
    QuadratureFailure,
    StudyFailed,
    ZeroDensity,
)
from .kernels import (
    NoiseKernel,
    ReciprocalKernel,
    eval_p,
    eval_p_bar,
    make_custom,
    make_exponential,
    make_kernel,
    make_triangular,
    make_uniform01,
    solve_reciprocal,
)
from .lse import UnProcess, eval_Un, eval_Yn, fit_lse, lse_char, qn
from .mixture import (
    AnalyticCDF,
    MixtureCDF,
    Sample,
    eval_F,
    eval_f,
    eval_g,
    eval_s,
    make_truth,
    sample,
    sqrt5_truth,
)
from .mle import fit_mle, loglik, mle_char_slack
from .results import CharTable, LseFit, MleFit

__version__ = "0.1.0"
