"""Sparse partially linear additive models with robust penalized estimation."""

from .basis import (CenteredSplineBasis, KnotVector, center, eval_uncentered,
                    gram, make_knots)
from .loss import LossSpec, ScaleSpec, mad, psi, rho, robust_standardize, s_scale, weight
from .model import (Dataset, DesignMatrix, PlamFit, build_bases, build_design,
                    eval_additive, load_dataset_csv, predict, predict_many,
                    preliminary_fit)
from .penalty import (LambdaVector, PenaltySpec, adaptive_lambdas,
                      composite_penalty, penalty_derivative, penalty_value)
from .selection import (default_k_grid, fit_unpenalized, rbic_k, rbic_lambda,
                        select)
from .simulation import SimConfig, StudyResult, gen_sample, run_study
from .solver import LqaMatrix, SolverOptions, irls_step, lqa_matrix, solve_penalized

__all__ = [
    "KnotVector",
    "CenteredSplineBasis",
    "make_knots",
    "eval_uncentered",
    "center",
    "gram",
    "LossSpec",
    "ScaleSpec",
    "rho",
    "psi",
    "weight",
    "s_scale",
    "mad",
    "robust_standardize",
    "PenaltySpec",
    "LambdaVector",
    "penalty_value",
    "penalty_derivative",
    "adaptive_lambdas",
    "composite_penalty",
    "Dataset",
    "DesignMatrix",
    "PlamFit",
    "load_dataset_csv",
    "build_bases",
    "build_design",
    "predict",
    "predict_many",
    "eval_additive",
    "preliminary_fit",
    "SolverOptions",
    "LqaMatrix",
    "lqa_matrix",
    "irls_step",
    "solve_penalized",
    "default_k_grid",
    "fit_unpenalized",
    "rbic_lambda",
    "rbic_k",
    "select",
    "SimConfig",
    "StudyResult",
    "gen_sample",
    "run_study",
]

__version__ = "0.1.0"
