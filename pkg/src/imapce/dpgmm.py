"""Truncated stick-breaking variational Dirichlet-process Gaussian mixture.

Coordinate-ascent mean-field inference with a Beta(1, concentration) stick
prior and a Normal-Wishart prior on each component's mean and precision.
The evidence lower bound is evaluated in full after every update so its
monotonicity can be checked.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import betaln, digamma, gammaln, logsumexp

from .core import EmbeddingSet, ValidationError


@dataclass(frozen=True)
class DpgmmConfig:
    """Prior and stopping settings.

    ``wishart_scale`` is the prior covariance matrix (the inverse of the
    Wishart scale on the precision); by default the mean per-axis data
    variance times the identity. ``mean_prior`` defaults to the data mean and
    ``wishart_dof`` to the data dimension.
    """

    max_components: int = 10
    concentration: float = 1.0
    mean_prior: Optional[np.ndarray] = None
    mean_precision: float = 1.0
    wishart_dof: Optional[float] = None
    wishart_scale: Optional[np.ndarray] = None
    max_vi_iter: int = 200
    elbo_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.max_components < 2:
            raise ValidationError("max_components must be >= 2")
        if self.concentration <= 0 or self.mean_precision <= 0:
            raise ValidationError("concentration and mean_precision must be positive")
        if self.max_vi_iter < 1 or self.elbo_tol <= 0:
            raise ValidationError("max_vi_iter must be >= 1 and elbo_tol positive")


@dataclass
class ClusterModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    assignments: np.ndarray
    responsibilities: np.ndarray
    elbo_trace: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def active_components(self) -> np.ndarray:
        return np.flatnonzero(np.bincount(self.assignments, minlength=len(self.weights)) > 0)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=len(self.weights))


def _log_wishart_norm(W_chol_logdet, dof, dim):
    """ln B(W, nu) given ln|W| (W is the Wishart scale on the precision)."""
    i = np.arange(1, dim + 1)
    return (-0.5 * dof * W_chol_logdet - 0.5 * dof * dim * np.log(2.0)
            - 0.25 * dim * (dim - 1) * np.log(np.pi)
            - np.sum(gammaln(0.5 * (dof + 1 - i[:, None])), axis=0))


class _State:
    pass


def _m_step(X, resp, prior):
    """Update the variational factors given responsibilities."""
    st = _State()
    n, dim = X.shape
    Nk = resp.sum(axis=0)
    safe = np.where(Nk > 0, Nk, 1.0)
    xbar = (resp.T @ X) / safe[:, None]
    xbar[Nk == 0] = 0.0
    T = len(Nk)
    S = np.empty((T, dim, dim))
    for k in range(T):
        diff = X - xbar[k]
        S[k] = (resp[:, k, None] * diff).T @ diff / safe[k]
    tail = np.concatenate((np.cumsum(Nk[::-1])[::-1][1:], [0.0]))
    st.a = 1.0 + Nk
    st.b = prior.concentration + tail
    st.beta = prior.mean_precision + Nk
    st.m = (prior.mean_precision * prior.m0 + Nk[:, None] * xbar) / st.beta[:, None]
    st.nu = prior.dof + Nk
    Winv = np.empty((T, dim, dim))
    for k in range(T):
        d0 = (xbar[k] - prior.m0)[:, None]
        Winv[k] = (prior.cov0 + Nk[k] * S[k]
                   + prior.mean_precision * Nk[k] / st.beta[k] * (d0 @ d0.T))
        Winv[k] = (Winv[k] + Winv[k].T) / 2
    st.Winv = Winv
    st.W = np.linalg.inv(Winv)
    sign, logdet_Winv = np.linalg.slogdet(Winv)
    st.logdet_W = -logdet_Winv
    i = np.arange(1, dim + 1)
    st.E_logdet = (np.sum(digamma(0.5 * (st.nu[None, :] + 1 - i[:, None])), axis=0)
                   + dim * np.log(2.0) + st.logdet_W)
    dab = digamma(st.a + st.b)
    st.E_logv = digamma(st.a) - dab
    st.E_log1mv = digamma(st.b) - dab
    st.E_logpi = st.E_logv + np.concatenate(([0.0], np.cumsum(st.E_log1mv)[:-1]))
    st.Nk, st.xbar, st.S = Nk, xbar, S
    return st


def _log_rho(X, st):
    n, dim = X.shape
    T = len(st.Nk)
    quad = np.empty((n, T))
    for k in range(T):
        diff = X - st.m[k]
        quad[:, k] = dim / st.beta[k] + st.nu[k] * np.einsum("ij,jk,ik->i", diff, st.W[k], diff)
    return st.E_logpi + 0.5 * st.E_logdet - 0.5 * dim * np.log(2 * np.pi) - 0.5 * quad


def _elbo(X, resp, st, prior):
    n, dim = X.shape
    T = len(st.Nk)
    Nk = st.Nk
    # E[ln p(X | Z, mu, Lambda)]
    lik = 0.0
    for k in range(T):
        if Nk[k] == 0:
            continue
        dx = st.xbar[k] - st.m[k]
        lik += 0.5 * Nk[k] * (st.E_logdet[k] - dim / st.beta[k]
                              - st.nu[k] * np.trace(st.S[k] @ st.W[k])
                              - st.nu[k] * dx @ st.W[k] @ dx
                              - dim * np.log(2 * np.pi))
    # E[ln p(Z | v)] - E[ln q(Z)]
    with np.errstate(divide="ignore", invalid="ignore"):
        rlogr = np.where(resp > 0, resp * np.log(resp), 0.0)
    z_term = float(np.sum(resp * st.E_logpi)) - float(np.sum(rlogr))
    # sticks: E[ln p(v)] - E[ln q(v)]
    c = prior.concentration
    v_term = float(np.sum(np.log(c) + (c - 1) * st.E_log1mv))
    v_term -= float(np.sum(-betaln(st.a, st.b) + (st.a - 1) * st.E_logv + (st.b - 1) * st.E_log1mv))
    # Normal-Wishart: E[ln p(mu, Lambda)] - E[ln q(mu, Lambda)]
    b0, nu0 = prior.mean_precision, prior.dof
    lnB0 = _log_wishart_norm(np.array([prior.logdet_W0]), nu0, dim)[0]
    lnBk = _log_wishart_norm(st.logdet_W, st.nu, dim)
    p_term = 0.0
    q_term = 0.0
    for k in range(T):
        dm = st.m[k] - prior.m0
        p_term += 0.5 * (dim * np.log(b0 / (2 * np.pi)) + st.E_logdet[k] - dim * b0 / st.beta[k]
                         - b0 * st.nu[k] * dm @ st.W[k] @ dm)
        p_term += lnB0 + 0.5 * (nu0 - dim - 1) * st.E_logdet[k]
        p_term -= 0.5 * st.nu[k] * np.trace(prior.cov0 @ st.W[k])
        entropy = -lnBk[k] - 0.5 * (st.nu[k] - dim - 1) * st.E_logdet[k] + 0.5 * st.nu[k] * dim
        q_term += (0.5 * st.E_logdet[k] + 0.5 * dim * np.log(st.beta[k] / (2 * np.pi))
                   - 0.5 * dim - entropy)
    return float(lik + z_term + v_term + p_term - q_term)


def _kmeans_resp(X, T, seed):
    from sklearn.cluster import KMeans

    n_clusters = min(T, len(np.unique(X, axis=0)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        labels = KMeans(n_clusters=n_clusters, n_init=1, random_state=seed).fit_predict(X)
    resp = np.zeros((X.shape[0], T))
    resp[np.arange(X.shape[0]), labels] = 1.0
    return resp


def fit(Q, cfg: DpgmmConfig = DpgmmConfig()) -> ClusterModel:
    """Fit the mixture to embedded points (an array or :class:`EmbeddingSet`).

    Rows are put in a canonical (lexicographic) order before the k-means
    initialisation, so the result does not depend on the input row order.
    Iteration stops when the ELBO gain drops below ``elbo_tol``.
    """
    X = Q.Q if isinstance(Q, EmbeddingSet) else np.asarray(Q, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, dim = X.shape
    if n < 2:
        raise ValidationError("need at least 2 points to cluster")
    if not np.all(np.isfinite(X)):
        raise ValidationError("non-finite input to DPGMM")
    order = np.lexsort(X.T[::-1])
    Xs = X[order]

    prior = _State()
    prior.concentration = cfg.concentration
    prior.mean_precision = cfg.mean_precision
    prior.m0 = Xs.mean(axis=0) if cfg.mean_prior is None else np.asarray(cfg.mean_prior, float)
    prior.dof = float(dim) if cfg.wishart_dof is None else float(cfg.wishart_dof)
    if prior.dof <= dim - 1:
        raise ValidationError(f"wishart_dof must exceed {dim - 1}")
    if cfg.wishart_scale is None:
        var = float(np.mean(Xs.var(axis=0)))
        prior.cov0 = max(var, 1e-12) * np.eye(dim)
    else:
        prior.cov0 = np.atleast_2d(np.asarray(cfg.wishart_scale, dtype=float))
        if prior.cov0.shape != (dim, dim) or np.any(np.linalg.eigvalsh(prior.cov0) <= 0):
            raise ValidationError("wishart_scale must be a symmetric positive definite k x k matrix")
    prior.logdet_W0 = -np.linalg.slogdet(prior.cov0)[1]

    T = cfg.max_components
    resp = _kmeans_resp(Xs, T, cfg.seed)
    st = _m_step(Xs, resp, prior)
    trace = [_elbo(Xs, resp, st, prior)]
    converged = False
    for _ in range(cfg.max_vi_iter):
        log_rho = _log_rho(Xs, st)
        resp = np.exp(log_rho - logsumexp(log_rho, axis=1, keepdims=True))
        st = _m_step(Xs, resp, prior)
        trace.append(_elbo(Xs, resp, st, prior))
        if abs(trace[-1] - trace[-2]) < cfg.elbo_tol:
            converged = True
            break
    log_rho = _log_rho(Xs, st)
    resp = np.exp(log_rho - logsumexp(log_rho, axis=1, keepdims=True))

    sticks = st.a / (st.a + st.b)
    weights = sticks * np.concatenate(([1.0], np.cumprod(1 - sticks)[:-1]))
    weights /= weights.sum()
    covariances = st.Winv / st.nu[:, None, None]
    inverse = np.empty(n, dtype=int)
    inverse[order] = np.arange(n)
    resp = resp[inverse]
    assignments = np.argmax(resp, axis=1)
    return ClusterModel(weights, st.m.copy(), covariances, assignments, resp, trace, converged)


@dataclass(frozen=True)
class ClusterSummary:
    label: int
    mean: np.ndarray
    covariance: np.ndarray
    size: int


def posterior_params(model: ClusterModel, min_size: int) -> List[ClusterSummary]:
    """Clusters holding at least ``min_size`` points, with ridge-regularised covariances.

    An empty list means no cluster is acceptable.
    """
    sizes = model.sizes
    out = []
    for label in np.flatnonzero(sizes >= min_size):
        C = model.covariances[label]
        dim = C.shape[0]
        C = C + 1e-6 * np.trace(C) / dim * np.eye(dim)
        out.append(ClusterSummary(int(label), model.means[label].copy(), C, int(sizes[label])))
    return out
