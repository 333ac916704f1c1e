"""Informative projections that factor out prior knowledge, plus iterative cluster exploration."""

from .core import (Dataset, EmbeddingSet, Hyperparams, PriorSpec, ValidationError, center,
                   check_stiefel, resolve_prior)
from .dpgmm import ClusterModel, DpgmmConfig, fit as fit_dpgmm, posterior_params
from .exploration import ExplorationHistory, distance_matrix, explore, mahalanobis, most_distinct
from .manifold import OptimizationError, SolverOptions, minimize
from .objectives import (ImapceProblem, auto_mu, cpca_alpha_select, cpca_project, imapce_cost,
                         imapce_euclid_gradient, kurtosis_index, multivariate_kurtosis,
                         solve_imapce)

__all__ = [
    "ClusterModel", "Dataset", "DpgmmConfig", "EmbeddingSet", "ExplorationHistory", "Hyperparams",
    "ImapceProblem", "OptimizationError", "PriorSpec", "SolverOptions", "ValidationError",
    "auto_mu", "center", "check_stiefel", "cpca_alpha_select", "cpca_project", "distance_matrix",
    "explore", "fit_dpgmm", "imapce_cost", "imapce_euclid_gradient", "kurtosis_index",
    "mahalanobis", "minimize", "most_distinct", "multivariate_kurtosis", "posterior_params",
    "resolve_prior", "solve_imapce",
]
