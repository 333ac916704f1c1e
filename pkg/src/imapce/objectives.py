"""IMAPCE cost and gradient, kurtosis indices, and the contrastive PCA baseline.

The reconstruction terms are evaluated in their on-manifold trace form,
``||X - X V V^T||_F^2 = tr(X^T X) - tr(V^T X^T X V)`` (exact whenever
``V^T V = I``), so that the closed-form gradient is the true Euclidean
gradient of the implemented function and finite differences in the ambient
space agree with it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .core import ValidationError


class SingularProjectionError(np.linalg.LinAlgError):
    """V^T X^T X V is singular, so the kurtosis term is undefined."""


def _sym(M):
    return (M + M.T) / 2


def _cholesky(A):
    try:
        return cho_factor(_sym(A), lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SingularProjectionError(f"projected covariance is singular: {exc}") from None


def kurtosis_index(X, v) -> float:
    """Univariate kurtosis index of the projections X v.

    Equals 3 for Gaussian data and 1 for a symmetric two-point mass; it is
    invariant to rescaling either X or v.
    """
    X = np.asarray(X, dtype=float)
    v = np.asarray(v, dtype=float).ravel()
    proj = X @ v
    second = float(proj @ proj)
    if second <= 0:
        raise ValidationError("projected variance is zero")
    return float(X.shape[0] * np.sum(proj ** 4) / second ** 2)


def _leverages(XtX, Z, V):
    """Return (g, P, chol) with g_i = z_i^T V A^{-1} V^T z_i and P = Z V."""
    A = V.T @ XtX @ V
    chol = _cholesky(A)
    P = Z @ V
    L = np.tril(chol[0])
    S = np.linalg.solve(L, P.T) if P.size else P.T
    g = np.einsum("ij,ij->j", S, S)
    return g, P, chol


def multivariate_kurtosis(X_full, Z, V) -> float:
    """p * sum over rows z of Z of (z^T V A^{-1} V^T z)^2, A = V^T X^T X V."""
    X_full = np.asarray(X_full, dtype=float)
    Z = np.asarray(Z, dtype=float)
    V = np.asarray(V, dtype=float)
    g, _, _ = _leverages(X_full.T @ X_full, Z, V)
    return float(Z.shape[0] * np.sum(g ** 2))


@dataclass
class ImapceProblem:
    """Data of one IMAPCE objective.

    X and Y should already be centred. ``Z`` holds the rows the kurtosis term
    is summed over and defaults to X. With ``normalize_background`` the prior
    term is rescaled by n/m so alpha weighs covariances rather than sums.
    """

    X: np.ndarray
    Y: Optional[np.ndarray] = None
    Z: Optional[np.ndarray] = None
    alpha: float = 0.0
    mu: float = 0.0
    normalize_background: bool = False
    XtX: np.ndarray = field(init=False, repr=False)
    YtY: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        n, d = self.X.shape
        Y = np.empty((0, d)) if self.Y is None else np.asarray(self.Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != d:
            raise ValidationError(f"prior matrix must have {d} columns, got shape {Y.shape}")
        self.Y = Y
        Z = self.X if self.Z is None else np.asarray(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != d or Z.shape[0] == 0:
            raise ValidationError("kurtosis rows must be a non-empty matrix with d columns")
        self.Z = Z
        if self.alpha < 0 or self.mu < 0:
            raise ValidationError("alpha and mu must be non-negative")
        if Y.shape[0] == 0 and self.alpha != 0:
            raise ValidationError("alpha must be 0 when there is no prior data")
        self.XtX = self.X.T @ self.X
        self.YtY = Y.T @ Y
        self._trX = float(np.trace(self.XtX))
        self._trY = float(np.trace(self.YtY))

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def background_weight(self) -> float:
        m = self.Y.shape[0]
        if m == 0:
            return 0.0
        scale = self.X.shape[0] / m if self.normalize_background else 1.0
        return self.alpha * scale

    def reconstruction(self, V) -> float:
        """||X - X V V^T||_F^2 - w ||Y - Y V V^T||_F^2 for V on St(k, d)."""
        V = np.asarray(V, dtype=float)
        fx = self._trX - np.einsum("ij,ij->", V, self.XtX @ V)
        w = self.background_weight
        if w:
            fx -= w * (self._trY - np.einsum("ij,ij->", V, self.YtY @ V))
        return float(fx)

    def kurtosis(self, V) -> float:
        if self.mu == 0:
            return 0.0
        g, _, _ = _leverages(self.XtX, self.Z, np.asarray(V, dtype=float))
        return float(self.Z.shape[0] * np.sum(g ** 2))


def imapce_cost(prob: ImapceProblem, V) -> float:
    """Prior-contrasted reconstruction loss plus mu times the kurtosis term."""
    value = prob.reconstruction(V)
    if prob.mu:
        value += prob.mu * prob.kurtosis(V)
    return value


def imapce_euclid_gradient(prob: ImapceProblem, V) -> np.ndarray:
    """Euclidean gradient of :func:`imapce_cost` with respect to V."""
    V = np.asarray(V, dtype=float)
    grad = -2.0 * (prob.XtX @ V)
    w = prob.background_weight
    if w:
        grad += 2.0 * w * (prob.YtY @ V)
    if prob.mu:
        g, P, chol = _leverages(prob.XtX, prob.Z, V)
        p = prob.Z.shape[0]
        # Z^T diag(g) P A^{-1}  and  X^T X V A^{-1} (P^T diag(g) P) A^{-1}
        B = cho_solve(chol, (prob.Z.T @ (g[:, None] * P)).T).T
        M = P.T @ (g[:, None] * P)
        AinvMAinv = cho_solve(chol, cho_solve(chol, M).T)
        grad += 4.0 * prob.mu * p * (B - prob.XtX @ V @ AinvMAinv)
    return grad


def _sign_fix(vecs):
    # largest-magnitude entry of each column positive, for reproducible output
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1
    return vecs * signs


def cpca_project(X, Y, alpha: float, k: int, normalize: bool = True) -> np.ndarray:
    """Top-k eigenvectors of C_x - alpha C_y (descending eigenvalue).

    Covariances are count-normalised unless ``normalize=False``. Ties are
    resolved by ``numpy.linalg.eigh`` ordering followed by a sign convention,
    so equal inputs always give the same basis.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if not 1 <= k <= d:
        raise ValidationError(f"need 1 <= k <= d, got k={k}, d={d}")
    C = X.T @ X / (X.shape[0] if normalize else 1.0)
    if Y is not None and alpha:
        Y = np.asarray(Y, dtype=float)
        if Y.shape[0]:
            C = C - alpha * (Y.T @ Y) / (Y.shape[0] if normalize else 1.0)
    evals, evecs = np.linalg.eigh(_sym(C))
    order = np.argsort(-evals, kind="stable")[:k]
    return _sign_fix(evecs[:, order])


def subspace_affinity(U, V) -> float:
    """Product of the cosines of the principal angles between span(U), span(V)."""
    s = np.linalg.svd(np.asarray(U).T @ np.asarray(V), compute_uv=False)
    return float(np.prod(np.clip(s, 0.0, 1.0)))


def principal_angles(U, V) -> np.ndarray:
    """Principal angles (radians) between two column-orthonormal bases."""
    s = np.linalg.svd(np.asarray(U).T @ np.asarray(V), compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def spectral_partition(affinity, n_clusters: int, seed: int = 0) -> np.ndarray:
    """Cluster items from a precomputed affinity matrix."""
    from sklearn.cluster import SpectralClustering

    n = affinity.shape[0]
    if n_clusters <= 1 or n == 1:
        return np.zeros(n, dtype=int)
    n_clusters = min(n_clusters, n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = SpectralClustering(n_clusters=n_clusters, affinity="precomputed",
                                   random_state=seed, assign_labels="cluster_qr")
        return model.fit_predict(affinity)


def default_cpca_alphas(n_alphas: int = 40, max_log_alpha: float = 3.0) -> np.ndarray:
    """alpha = 0 followed by a log grid from 0.1 to 10**max_log_alpha."""
    return np.concatenate(([0.0], np.logspace(-1, max_log_alpha, n_alphas)))


@dataclass
class CpcaSelection:
    alpha: float
    V: np.ndarray
    index: int
    labels: np.ndarray
    affinity: np.ndarray


def cpca_alpha_select(X, Y, alphas: Sequence[float], n_spectral_clusters: int = 4, k: int = 2,
                      seed: int = 0, normalize: bool = True) -> CpcaSelection:
    """Pick the cPCA projection at the medoid of the largest subspace cluster.

    Projections for every alpha are grouped by spectral clustering on the
    principal-angle affinity; inside the most populous group the member with
    the largest summed affinity wins. Ties go to the lowest index.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValidationError("need at least one alpha")
    bases = [cpca_project(X, Y, a, k, normalize=normalize) for a in alphas]
    n = len(bases)
    aff = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            aff[i, j] = aff[j, i] = subspace_affinity(bases[i], bases[j])
    labels = spectral_partition(aff, n_spectral_clusters, seed)
    sizes = np.bincount(labels)
    # largest group; ties go to the group holding the lowest index
    best_size = sizes.max()
    group = next(labels[i] for i in range(n) if sizes[labels[i]] == best_size)
    members = np.flatnonzero(labels == group)
    scores = aff[np.ix_(members, members)].sum(axis=1)
    pick = int(members[int(np.argmax(scores))])
    return CpcaSelection(alphas[pick], bases[pick], pick, labels, aff)


def cpca_reconstruction_error(X, Y, alpha: float, k: int) -> float:
    """||X - X V V^T||_F^2 with V the cPCA projection (PCA when Y is empty)."""
    X = np.asarray(X, dtype=float)
    V = cpca_project(X, Y, alpha, k)
    R = X - X @ V @ V.T
    return float(np.sum(R * R))


def auto_mu(X, Y, alpha: float, k: int, exponent: int = -2) -> float:
    """Kurtosis weight one or two orders of magnitude below the cPCA error."""
    if exponent not in (-1, -2):
        raise ValidationError("auto-mu exponent must be -1 or -2")
    return cpca_reconstruction_error(X, Y, alpha, k) * 10.0 ** exponent


def make_problem(X, Y=None, Z=None, alpha=0.0, mu=0.0, normalize_background=False) -> ImapceProblem:
    return ImapceProblem(X, Y, Z, alpha, mu, normalize_background)


def solve_imapce(prob: ImapceProblem, k: int, opts=None, initial=None):
    """Run the Stiefel solver on an IMAPCE problem."""
    from .manifold import SolverOptions, minimize

    opts = opts or SolverOptions()
    return minimize(lambda V: imapce_cost(prob, V),
                    lambda V: imapce_euclid_gradient(prob, V),
                    prob.d, k, opts, initial=initial)
