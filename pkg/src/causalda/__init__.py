"""Data augmentation as a soft intervention for causal effect estimation.

Linear (possibly cyclic) Gaussian SEMs, outcome-invariant augmentation,
OLS / 2SLS / IVL estimators, alpha selection, nCER evaluation and a seeded
experiment harness.
"""

from causalda.augmentation import DaOperator, apply, gaussian_noise_da, nullspace_basis, subset_basis
from causalda.estimators import LinearEstimate, RiskReport, fit_2sls, fit_ivl, fit_ols, ivl_path
from causalda.evaluation import EvalConfig, aggregate, cer, ncer
from causalda.selection import AlphaGrid, select_alpha_cc, select_alpha_cv, select_alpha_lcv
from causalda.sem import Dataset, SemSpec, sample, sample_iterative, sample_soft_do, validate_spec

__version__ = "0.1.0"

__all__ = [
    "AlphaGrid", "DaOperator", "Dataset", "EvalConfig", "LinearEstimate", "RiskReport",
    "SemSpec", "aggregate", "apply", "cer", "fit_2sls", "fit_ivl", "fit_ols",
    "gaussian_noise_da", "ivl_path", "ncer", "nullspace_basis", "sample", "sample_iterative",
    "sample_soft_do", "select_alpha_cc", "select_alpha_cv", "select_alpha_lcv",
    "subset_basis", "validate_spec",
]
