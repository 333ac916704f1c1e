"""Iterative cluster exploration.

Each round finds an informative projection of the still-unexplored rows,
clusters the embedded rows, and moves the cluster that lies farthest from
the others into the prior, so the next projection looks for something new.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core import Dataset, EmbeddingSet, Hyperparams, PriorSpec, ValidationError, center
from .dpgmm import ClusterModel, ClusterSummary, DpgmmConfig, fit, posterior_params
from .manifold import OptimizationError, SolverOptions
from .objectives import (ImapceProblem, cpca_alpha_select, default_cpca_alphas, imapce_cost,
                         solve_imapce)

log = logging.getLogger(__name__)

MAX_OUTER_ITERATIONS = 50
METHODS = ("imapce", "cpca")


def mahalanobis(m_j, m_l, C_l) -> float:
    """Distance of mean ``m_j`` from cluster l, measured in l's covariance."""
    diff = np.atleast_1d(np.asarray(m_j, dtype=float) - np.asarray(m_l, dtype=float))
    C = np.atleast_2d(np.asarray(C_l, dtype=float))
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("cluster covariance is not positive definite") from exc
    w = np.linalg.solve(L, diff)
    return float(np.sqrt(w @ w))


def distance_matrix(clusters: Sequence[ClusterSummary]) -> np.ndarray:
    """Symmetrised pairwise Mahalanobis distances between cluster means."""
    if len(clusters) < 2:
        raise ValidationError("need at least two clusters")
    c = len(clusters)
    delta = np.zeros((c, c))
    for l in range(c):
        for j in range(c):
            if j != l:
                delta[l, j] = mahalanobis(clusters[j].mean, clusters[l].mean, clusters[l].covariance)
    return (delta + delta.T) / 2


def most_distinct(D) -> tuple:
    """Indices of the most distinct cluster(s).

    With exactly two clusters both are returned; otherwise the row with the
    largest sum, ties going to the lowest index.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] < 2:
        raise ValidationError("D must be a square matrix over at least two clusters")
    if D.shape[0] == 2:
        return (0, 1)
    return (int(np.argmax(D.sum(axis=1))),)


@dataclass
class IterationRecord:
    V_star: np.ndarray
    embeddings: EmbeddingSet
    cluster_model: ClusterModel
    accepted_labels: List[int]
    distinct_labels: List[int]
    distinct_cluster_rows: List[np.ndarray]
    objective_value: float
    alpha: float

    @property
    def claimed_rows(self) -> np.ndarray:
        if not self.distinct_cluster_rows:
            return np.empty(0, dtype=int)
        return np.sort(np.concatenate(self.distinct_cluster_rows))


@dataclass
class ExplorationHistory:
    n: int
    initial_prior_rows: np.ndarray
    iterations: List[IterationRecord] = field(default_factory=list)
    terminal_reason: str = ""

    @property
    def distinct_clusters(self) -> List[np.ndarray]:
        """Every stored cluster as a row-index array, in discovery order."""
        return [rows for it in self.iterations for rows in it.distinct_cluster_rows]

    def unexplored_after(self, i: int) -> np.ndarray:
        taken = [self.initial_prior_rows] + [it.claimed_rows for it in self.iterations[: i + 1]]
        return np.setdiff1d(np.arange(self.n), np.concatenate(taken))


def _round_seed(seed: int, round_index: int, salt: int) -> int:
    return int(np.random.SeedSequence([seed, round_index, salt]).generate_state(1)[0])


def _projection(method, Xc, Yc, z_rows, alpha, hp: Hyperparams, seed):
    if method == "imapce":
        prob = ImapceProblem(Xc, Yc, Xc[z_rows], alpha=alpha, mu=hp.mu)
        opts = SolverOptions(max_iter=hp.max_iter, grad_tol=hp.grad_tol,
                             restarts=hp.restarts, seed=seed)
        report = solve_imapce(prob, hp.k, opts)
        return report.V_star, report.objective_value
    # cPCA picks its own contrast strength; without background data it is PCA.
    alphas = default_cpca_alphas() if alpha > 0 else np.array([0.0])
    sel = cpca_alpha_select(Xc, Yc, alphas, k=hp.k, seed=seed)
    prob = ImapceProblem(Xc, Yc, Xc[z_rows], alpha=sel.alpha, mu=0.0)
    return sel.V, imapce_cost(prob, sel.V)


def explore(data: Dataset, prior: PriorSpec = PriorSpec.none(), hp: Hyperparams = Hyperparams(),
            dpgmm_cfg: DpgmmConfig = DpgmmConfig(), method: str = "imapce",
            max_outer_iterations: int = MAX_OUTER_ITERATIONS) -> ExplorationHistory:
    """Run the exploration loop until too few rows remain or no cluster qualifies.

    The background matrix is the prior (if any) plus every row claimed so far;
    the target is always the full data. Both are centred on their own means.
    While the background is empty the contrast weight is zero.
    """
    if method not in METHODS:
        raise ValidationError(f"method must be one of {METHODS}, got {method!r}")
    if max_outer_iterations < 1:
        raise ValidationError("max_outer_iterations must be >= 1")
    X = np.array(data.values)
    n, d = X.shape
    prior.validate(n, d)
    hp.validate(d, prior)
    Xc = center(X)

    if prior.kind == "attributes":
        base = np.zeros_like(X)
        base[:, list(prior.columns)] = X[:, list(prior.columns)]
    elif prior.kind == "samples":
        base = np.array(prior.samples)
    else:
        base = np.empty((0, d))
    prior_rows = np.array(sorted(prior.rows), dtype=int) if prior.kind == "subset" else np.empty(0, int)
    in_prior = np.zeros(n, dtype=bool)
    in_prior[prior_rows] = True

    history = ExplorationHistory(n, prior_rows)
    for it in range(max_outer_iterations):
        z_rows = np.flatnonzero(~in_prior)
        if z_rows.size <= hp.s:
            history.terminal_reason = "too_few_unexplored"
            return history
        Y = np.vstack((base, X[in_prior]))
        if Y.shape[0] > 0:
            Yc, alpha = center(Y), hp.alpha
        else:
            Yc, alpha = np.empty((0, d)), 0.0
        try:
            V, value = _projection(method, Xc, Yc, z_rows, alpha, hp, _round_seed(hp.seed, it, 0))
        except OptimizationError as exc:
            raise OptimizationError(f"iteration {it}: {exc}") from exc
        Q = Xc[z_rows] @ V
        cfg = DpgmmConfig(**{**dpgmm_cfg.__dict__, "seed": _round_seed(dpgmm_cfg.seed, it, 1)})
        model = fit(Q, cfg)
        accepted = posterior_params(model, hp.s)
        record = IterationRecord(V, EmbeddingSet(Q, z_rows), model,
                                 [c.label for c in accepted], [], [], value, alpha)
        history.iterations.append(record)
        log.info("iteration %d: %d unexplored, %d acceptable clusters", it, z_rows.size, len(accepted))
        if len(accepted) < 2:
            history.terminal_reason = "no_acceptable_cluster"
            return history
        picks = most_distinct(distance_matrix(accepted))
        for p in picks:
            label = accepted[p].label
            rows = z_rows[model.assignments == label]
            record.distinct_labels.append(label)
            record.distinct_cluster_rows.append(rows)
            in_prior[rows] = True
    history.terminal_reason = "max_iterations"
    return history
