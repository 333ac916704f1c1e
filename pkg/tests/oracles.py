"""Independent reference computations used as test oracles.

Each routine re-derives a quantity by a different route than the package:
extended precision, dense brute force, or a third-party implementation.
"""

import numpy as np


def imapce_cost_longdouble(X, Y, Z, alpha, mu, V):
    """Trace-form objective in long double, k = 2 only (explicit 2x2 inverse)."""
    ld = np.longdouble
    X, Y, Z, V = (np.asarray(M, dtype=ld) for M in (X, Y, Z, V))
    XV = X @ V
    rec = np.sum(X * X) - np.sum(XV * XV)
    if Y.shape[0]:
        YV = Y @ V
        rec -= ld(alpha) * (np.sum(Y * Y) - np.sum(YV * YV))
    A = XV.T @ XV
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    Ainv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]], dtype=ld) / det
    P = Z @ V
    lev = np.einsum("ij,jk,ik->i", P, Ainv, P)
    return rec + ld(mu) * Z.shape[0] * np.sum(lev * lev)


def fd_gradient_5pt(f, V, h):
    """Fourth-order central differences of f at V, evaluated in long double."""
    V = np.asarray(V, dtype=np.longdouble)
    G = np.zeros(V.shape, dtype=np.longdouble)
    h = np.longdouble(h)
    for idx in np.ndindex(V.shape):
        E = np.zeros_like(V)
        E[idx] = h
        G[idx] = (-f(V + 2 * E) + 8 * f(V + E) - 8 * f(V - E) + f(V - 2 * E)) / (12 * h)
    return G.astype(float)


def pca_subspace(X, k):
    """Top-k eigenvectors of X^T X and the trailing eigenvalue sum."""
    w, U = np.linalg.eigh(X.T @ X)
    order = np.argsort(w)[::-1]
    return U[:, order[:k]], float(np.sum(w[order[k:]]))


def principal_angles(U, V):
    """Angles from the sines (accurate near zero), via the residual of V off span(U)."""
    Qu, _ = np.linalg.qr(U)
    Qv, _ = np.linalg.qr(V)
    sines = np.linalg.svd(Qv - Qu @ (Qu.T @ Qv), compute_uv=False)
    return np.sort(np.arcsin(np.clip(sines, 0.0, 1.0)))


def laplacian_score_dense(Q, labels, n_neighbors):
    """Dense-matrix Laplacian score with brute-force neighbour search."""
    Q = np.asarray(Q, dtype=float)
    p = Q.shape[0]
    D2 = ((Q[:, None, :] - Q[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(D2, np.inf)
    W = np.zeros((p, p))
    for i in range(p):
        W[i, np.argsort(D2[i], kind="stable")[:n_neighbors]] = 1.0
    W = np.maximum(W, W.T)
    Dg = np.diag(W.sum(1))
    L = Dg - W
    score = 0.0
    for c in np.unique(labels):
        z = (labels == c).astype(float)
        score += z.mean() * (z @ L @ z) / (z @ Dg @ z)
    return score


def check_history_invariants(history, n):
    """Assert the exploration bookkeeping rules; returns the number of rounds checked."""
    prior = set(map(int, history.initial_prior_rows))
    claimed = set()
    previous_unexplored = n - len(prior)
    for i, it in enumerate(history.iterations):
        z = set(map(int, it.embeddings.source_rows))
        explored = prior | claimed
        assert not z & explored, "unexplored rows overlap the prior"
        assert z | explored == set(range(n)), "prior and unexplored rows do not cover the data"
        assert len(z) == previous_unexplored
        for rows in it.distinct_cluster_rows:
            rows = set(map(int, rows))
            assert rows <= z
            assert not rows & claimed, "distinct clusters overlap"
            claimed |= rows
        if i + 1 < len(history.iterations):
            assert len(claimed | prior) > len(explored), "unexplored set did not shrink"
        previous_unexplored = n - len(prior | claimed)
    return len(history.iterations)


def assert_histories_identical(a, b):
    assert a.terminal_reason == b.terminal_reason
    assert len(a.iterations) == len(b.iterations)
    for x, y in zip(a.iterations, b.iterations):
        np.testing.assert_array_equal(x.V_star, y.V_star)
        np.testing.assert_array_equal(x.cluster_model.assignments, y.cluster_model.assignments)
        assert len(x.distinct_cluster_rows) == len(y.distinct_cluster_rows)
        for r, s in zip(x.distinct_cluster_rows, y.distinct_cluster_rows):
            np.testing.assert_array_equal(r, s)
