"""Embedding and clustering quality scores."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .core import ValidationError


@dataclass(frozen=True)
class KnnGraph:
    """Symmetrised k-nearest-neighbour graph with unit edge weights."""

    adjacency: sparse.csr_matrix
    n_neighbors: int

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()


def knn_graph(Q, n_neighbors: int) -> KnnGraph:
    Q = np.asarray(Q, dtype=float)
    p = Q.shape[0]
    if not 1 <= n_neighbors < p:
        raise ValidationError(f"n_neighbors must lie in [1, {p}), got {n_neighbors}")
    _, idx = cKDTree(Q).query(Q, k=n_neighbors + 1)
    rows = np.repeat(np.arange(p), n_neighbors)
    cols = np.empty((p, n_neighbors), dtype=int)
    for i in range(p):
        nb = idx[i][idx[i] != i]
        cols[i] = nb[:n_neighbors]
    W = sparse.coo_matrix((np.ones(rows.size), (rows, cols.ravel())), shape=(p, p)).tocsr()
    W = ((W + W.T) > 0).astype(float).tocsr()
    W.setdiag(0)
    W.eliminate_zeros()
    return KnnGraph(W, n_neighbors)


def laplacian_score(Q, labels, n_neighbors: int) -> float:
    """Share of neighbourhood edges that cross label boundaries.

    For each label value c with indicator z, ``z^T L z / z^T D z`` on the
    unit-weight kNN graph (L = D - W) is the fraction of c's edge endpoints
    whose other end carries a different label. The score is the class-size
    weighted mean, in [0, 1]; larger means the labels are better mixed.
    """
    labels = np.asarray(labels)
    Q = np.asarray(Q, dtype=float)
    if labels.shape[0] != Q.shape[0]:
        raise ValidationError("labels and embeddings differ in length")
    classes, inverse = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise ValidationError("laplacian score needs at least two label values")
    graph = knn_graph(Q, n_neighbors)
    W = graph.adjacency.tocoo()
    deg = graph.degrees
    if np.any(deg == 0):
        raise ValidationError("degenerate graph: isolated node")
    cross = inverse[W.row] != inverse[W.col]
    score = 0.0
    for c in range(classes.size):
        members = inverse == c
        cut = float(np.sum(cross & members[W.row]))
        vol = float(deg[members].sum())
        score += members.mean() * cut / vol
    return float(score)


def laplacian_sweep(Q, labels, neighbor_sizes: Iterable[int]) -> list:
    return [(int(k), laplacian_score(Q, labels, int(k))) for k in neighbor_sizes]


def jaccard(a, b) -> float:
    a, b = set(map(int, a)), set(map(int, b))
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def mean_jaccard(distinct_clusters: Sequence[Iterable[int]], ground_truth_labels) -> float:
    """Average over classes of the best Jaccard index against any stored cluster.

    Clusters are row-index sets into ``ground_truth_labels``. A class with no
    overlapping cluster scores 0; two classes may match the same cluster.
    """
    labels = np.asarray(ground_truth_labels)
    if labels.size == 0:
        raise ValidationError("ground truth is empty")
    clusters = [set(map(int, c)) for c in distinct_clusters]
    scores = []
    for value in np.unique(labels):
        members = set(np.flatnonzero(labels == value).tolist())
        scores.append(max((jaccard(members, c) for c in clusters), default=0.0))
    return float(np.mean(scores))


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(labels_a, labels_b) -> float:
    """Mutual information normalised by the arithmetic mean of the entropies.

    Two constant partitions score 1; exactly one constant partition scores 0.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValidationError("empty partitions")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    n = a.size
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / outer[nz])))
    return float(np.clip(mi / ((ha + hb) / 2), 0.0, 1.0))


def exploration_partition(distinct_clusters: Sequence[Iterable[int]], n: int) -> np.ndarray:
    """Label rows by the stored cluster that claimed them; unclaimed rows get -1."""
    out = np.full(n, -1, dtype=int)
    for i, rows in enumerate(distinct_clusters):
        out[np.asarray(list(rows), dtype=int)] = i
    return out


def separability_accuracy(Q, labels, n_splits: int = 10, train_frac: float = 0.75,
                          seed: int = 0, C: float = 1.0) -> Tuple[float, float]:
    """Test accuracy (mean, std) of a linear max-margin classifier.

    Features are standardised with training statistics; a hinge-loss,
    L2-regularised linear SVM (one-vs-rest for more than two classes) is fit
    on each of ``n_splits`` seeded stratified splits.
    """
    from sklearn.model_selection import StratifiedShuffleSplit
    from sklearn.svm import LinearSVC

    Q = np.asarray(Q, dtype=float)
    labels = np.asarray(labels)
    if Q.shape[0] != labels.shape[0]:
        raise ValidationError("labels and embeddings differ in length")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise ValidationError("need at least two classes")
    if counts.min() < 4:
        raise ValidationError("every class needs at least 4 points")
    splitter = StratifiedShuffleSplit(n_splits=n_splits, train_size=train_frac,
                                      random_state=seed)
    scores = []
    for train, test in splitter.split(Q, labels):
        mean = Q[train].mean(axis=0)
        std = Q[train].std(axis=0)
        std[std == 0] = 1.0
        clf = LinearSVC(C=C, loss="hinge", dual=True, max_iter=20000, random_state=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            clf.fit((Q[train] - mean) / std, labels[train])
        scores.append(float(np.mean(clf.predict((Q[test] - mean) / std) == labels[test])))
    return float(np.mean(scores)), float(np.std(scores))
