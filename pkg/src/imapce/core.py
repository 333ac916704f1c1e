"""Shared data containers and prior-knowledge plumbing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

STIEFEL_TOL = 1e-8


class ValidationError(ValueError):
    """Raised when inputs violate a container or operation contract."""


def _as_matrix(values, name="values"):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """An n x d sample matrix with optional integer labels and column names.

    ``extra_labels`` holds additional named label vectors (the synthetic
    generator emits two).
    """

    values: np.ndarray
    labels: Optional[np.ndarray] = None
    column_names: Optional[tuple] = None
    extra_labels: dict = field(default_factory=dict)
    label_names: Optional[tuple] = None

    def __post_init__(self):
        values = _as_matrix(self.values)
        n, d = values.shape
        if n < 1 or d < 1:
            raise ValidationError(f"dataset must have n >= 1 and d >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("dataset contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels).astype(int)
            if labels.shape != (n,):
                raise ValidationError(f"labels must have length {n}, got {labels.shape}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != d:
                raise ValidationError(f"expected {d} column names, got {len(names)}")
            object.__setattr__(self, "column_names", names)
        extra = {}
        for key, vec in self.extra_labels.items():
            vec = np.asarray(vec).astype(int)
            if vec.shape != (n,):
                raise ValidationError(f"label vector {key!r} must have length {n}")
            vec.setflags(write=False)
            extra[key] = vec
        object.__setattr__(self, "extra_labels", extra)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            self.values[rows],
            None if self.labels is None else self.labels[rows],
            self.column_names,
            {k: v[rows] for k, v in self.extra_labels.items()},
            self.label_names,
        )


@dataclass(frozen=True)
class PriorSpec:
    """Which knowledge to factor out of the embedding.

    kind is one of ``"none"``, ``"attributes"`` (``columns``), ``"samples"``
    (``samples`` matrix) or ``"subset"`` (``rows``).
    """

    kind: str = "none"
    columns: tuple = ()
    samples: Optional[np.ndarray] = None
    rows: tuple = ()

    @classmethod
    def none(cls) -> "PriorSpec":
        return cls("none")

    @classmethod
    def attributes(cls, columns: Sequence[int]) -> "PriorSpec":
        return cls("attributes", columns=tuple(int(c) for c in columns))

    @classmethod
    def from_samples(cls, samples) -> "PriorSpec":
        return cls("samples", samples=_as_matrix(samples, "prior samples"))

    @classmethod
    def subset(cls, rows: Sequence[int]) -> "PriorSpec":
        return cls("subset", rows=tuple(int(r) for r in rows))

    def validate(self, n: int, d: int) -> None:
        if self.kind == "none":
            return
        if self.kind == "attributes":
            cols = self.columns
            if not cols:
                raise ValidationError("attribute prior needs at least one column")
            if len(set(cols)) != len(cols):
                raise ValidationError("attribute prior columns contain duplicates")
            if min(cols) < 0 or max(cols) >= d:
                raise ValidationError(f"attribute prior columns must lie in [0, {d})")
        elif self.kind == "samples":
            if self.samples is None or self.samples.shape[0] < 1:
                raise ValidationError("sample prior needs at least one row")
            if self.samples.shape[1] != d:
                raise ValidationError(
                    f"prior samples have {self.samples.shape[1]} columns, data has {d}")
            if not np.all(np.isfinite(self.samples)):
                raise ValidationError("prior samples contain non-finite values")
        elif self.kind == "subset":
            rows = self.rows
            if len(set(rows)) != len(rows):
                raise ValidationError("subset prior rows contain duplicates")
            if rows and (min(rows) < 0 or max(rows) >= n):
                raise ValidationError(f"subset prior rows must lie in [0, {n})")
        else:
            raise ValidationError(f"unknown prior kind {self.kind!r}")


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 1.0
    mu: float = 0.0
    k: int = 2
    s: int = 75
    restarts: int = 1
    seed: int = 0
    max_iter: int = 500
    grad_tol: float = 1e-6

    def validate(self, d: int, prior: PriorSpec) -> None:
        if self.alpha < 0 or self.mu < 0:
            raise ValidationError("alpha and mu must be non-negative")
        if not 1 <= self.k < d:
            raise ValidationError(f"embedding dimension k={self.k} must satisfy 1 <= k < d={d}")
        if self.s < 1 or self.restarts < 1 or self.max_iter < 1:
            raise ValidationError("s, restarts and max_iter must be >= 1")
        if self.grad_tol <= 0:
            raise ValidationError("grad_tol must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")

    def effective_alpha(self, prior: PriorSpec) -> float:
        return 0.0 if prior.kind == "none" else self.alpha


@dataclass(frozen=True)
class EmbeddingSet:
    """Embedded rows ``Q`` together with their row ids in the source dataset."""

    Q: np.ndarray
    source_rows: np.ndarray

    def __post_init__(self):
        Q = _as_matrix(self.Q, "embeddings")
        rows = np.asarray(self.source_rows, dtype=int)
        if rows.shape != (Q.shape[0],):
            raise ValidationError("source_rows length must equal the number of embedded rows")
        if not np.all(np.isfinite(Q)):
            raise ValidationError("embeddings contain non-finite values")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "source_rows", rows)


def stiefel_error(V) -> float:
    """Frobenius distance of V^T V from the identity."""
    V = np.asarray(V, dtype=float)
    return float(np.linalg.norm(V.T @ V - np.eye(V.shape[1])))


def check_stiefel(V, tol: float = STIEFEL_TOL) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[1] > V.shape[0]:
        raise ValidationError(f"projection must be d x k with k <= d, got {V.shape}")
    err = stiefel_error(V)
    if err > tol:
        raise ValidationError(f"projection is not column-orthonormal (error {err:.2e})")
    return V


@dataclass(frozen=True)
class Centering:
    """Column means removed from a matrix, kept so they can be reapplied."""

    mean: np.ndarray

    def apply(self, M) -> np.ndarray:
        return np.asarray(M, dtype=float) - self.mean


def center(X, return_transform: bool = False):
    """Subtract column means. Idempotent."""
    X = _as_matrix(X, "X")
    if X.shape[0] < 1:
        raise ValidationError("cannot center an empty matrix")
    mean = X.mean(axis=0)
    Xc = X - mean
    if return_transform:
        return Xc, Centering(mean)
    return Xc


@dataclass(frozen=True)
class ResolvedPrior:
    X: np.ndarray
    Y: np.ndarray
    z_rows: np.ndarray


def resolve_prior(data: Dataset, prior: PriorSpec) -> ResolvedPrior:
    """Map a prior onto the (X, Y, Z rows) triple consumed by the objective.

    Attribute priors keep the prior columns of X and zero the rest, sample
    priors use the external matrix as is, subset priors use the selected rows
    and leave the complement as the unexplored set.
    """
    X = np.array(data.values)
    n, d = X.shape
    prior.validate(n, d)
    all_rows = np.arange(n)
    if prior.kind == "none":
        return ResolvedPrior(X, np.empty((0, d)), all_rows)
    if prior.kind == "attributes":
        Y = np.zeros_like(X)
        cols = list(prior.columns)
        Y[:, cols] = X[:, cols]
        return ResolvedPrior(X, Y, all_rows)
    if prior.kind == "samples":
        return ResolvedPrior(X, np.array(prior.samples), all_rows)
    rows = np.array(sorted(prior.rows), dtype=int)
    z_rows = np.setdiff1d(all_rows, rows)
    if z_rows.size == 0:
        raise ValidationError("subset prior covers every row; nothing left to explore")
    return ResolvedPrior(X, X[rows], z_rows)
