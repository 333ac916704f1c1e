"""Dataset generation, loading and preprocessing."""

from __future__ import annotations

import csv
import gzip
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import Dataset, ValidationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MISSING_TOKENS = {"", "?", "na", "nan", "null"}


class DataFormatError(ValueError):
    """A data file could not be parsed."""


class DroppedRowsWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 1500
    d: int = 10
    n_clusters_prior: int = 2
    n_clusters_hidden: int = 3
    prior_center_std: float = 5.0
    hidden_center_std: float = 1.0
    noise_std: float = 0.1
    seed: int = 0


def gen_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> Dataset:
    """Ten-dimensional benchmark with cluster structure in two column groups.

    Columns 0-3 hold one of ``n_clusters_prior`` centres, columns 4-5 one of
    ``n_clusters_hidden`` centres (both plus Gaussian noise); the remaining
    columns are standard normal. Centre coordinates are Gaussian with the
    given standard deviations. Labels: ``labels`` / ``extra_labels['dims14']``
    for columns 0-3 and ``extra_labels['dims56']`` for columns 4-5.
    """
    if spec.d < 6:
        raise ValidationError("synthetic data needs at least 6 columns")
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    prior_labels = rng.integers(0, spec.n_clusters_prior, n)
    hidden_labels = rng.integers(0, spec.n_clusters_hidden, n)
    prior_centers = rng.normal(0.0, spec.prior_center_std, (spec.n_clusters_prior, 4))
    hidden_centers = rng.normal(0.0, spec.hidden_center_std, (spec.n_clusters_hidden, 2))
    X = np.empty((n, spec.d))
    X[:, :4] = prior_centers[prior_labels]
    X[:, 4:6] = hidden_centers[hidden_labels]
    X[:, :6] += rng.normal(0.0, spec.noise_std, (n, 6))
    X[:, 6:] = rng.normal(0.0, 1.0, (n, spec.d - 6))
    names = [f"x{i + 1}" for i in range(spec.d)]
    return Dataset(X, prior_labels, names,
                   {"dims14": prior_labels, "dims56": hidden_labels})


# --------------------------------------------------------------------------
# CSV


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", newline="")
    return open(path, newline="")


def load_csv(
    path,
    numeric_cols: Optional[Sequence[str]] = None,
    binary_cols: Union[Mapping[str, str], Sequence[str], None] = None,
    label_col: Optional[str] = None,
    strict: bool = False,
    extra_label_cols: Sequence[str] = (),
) -> Dataset:
    """Read a comma-separated file with a header row.

    ``binary_cols`` maps a column to the value encoded as 1 (everything else
    is 0); a plain list encodes the lexicographically larger of exactly two
    observed values as 1. With ``numeric_cols=None`` every column that is not
    binary or the label is numeric. Rows with missing or unparseable cells
    are dropped with a :class:`DroppedRowsWarning` naming their line numbers;
    ``strict=True`` raises instead. Label columns whose values are all
    integers keep those integers; other labels are numbered in sorted order.
    ``extra_label_cols`` are read the same way into ``extra_labels``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with _open_text(path) as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0][1]]
    body = rows[1:]
    if not body:
        raise DataFormatError(f"{path}: header but no data rows")
    index = {name: j for j, name in enumerate(header)}

    if isinstance(binary_cols, Mapping):
        binary_spec = dict(binary_cols)
    else:
        binary_spec = {c: None for c in (binary_cols or [])}
    if numeric_cols is None:
        numeric_cols = [h for h in header if h not in binary_spec and h != label_col
                        and h not in extra_label_cols]
    label_cols = ([label_col] if label_col else []) + list(extra_label_cols)
    wanted = list(numeric_cols) + list(binary_spec) + label_cols
    unknown = [c for c in wanted if c not in index]
    if unknown:
        raise DataFormatError(f"{path}: unknown column(s) {unknown}")

    bad = []
    kept = []
    for lineno, row in body:
        cells = [c.strip() for c in row]
        if len(cells) != len(header):
            bad.append((lineno, f"expected {len(header)} fields, got {len(cells)}"))
            continue
        if any(cells[index[c]].lower() in MISSING_TOKENS for c in wanted):
            bad.append((lineno, "missing value"))
            continue
        try:
            nums = [float(cells[index[c]]) for c in numeric_cols]
        except ValueError as exc:
            bad.append((lineno, str(exc)))
            continue
        if not np.all(np.isfinite(nums)):
            bad.append((lineno, "non-finite value"))
            continue
        kept.append((nums, [cells[index[c]] for c in binary_spec],
                     [cells[index[c]] for c in label_cols]))
    if bad:
        detail = "; ".join(f"line {ln}: {why}" for ln, why in bad[:20])
        if strict:
            raise DataFormatError(f"{path}: malformed rows: {detail}")
        warnings.warn(DroppedRowsWarning(f"{path}: dropped {len(bad)} row(s): {detail}"),
                      stacklevel=2)
    if not kept:
        raise DataFormatError(f"{path}: no usable rows")

    columns = [np.array([k[0][j] for k in kept]) for j in range(len(numeric_cols))]
    for j, (name, positive) in enumerate(binary_spec.items()):
        raw = [k[1][j] for k in kept]
        if positive is None:
            values = sorted(set(raw))
            if len(values) > 2:
                raise DataFormatError(f"{path}: column {name!r} is not binary: {values[:5]}")
            positive = values[-1]
        columns.append(np.array([1.0 if v == positive else 0.0 for v in raw]))
    decoded = [_decode_labels([k[2][j] for k in kept]) for j in range(len(label_cols))]
    labels = label_names = None
    if label_col:
        labels, label_names = decoded.pop(0)
    extra = {name: vec for name, (vec, _) in zip(extra_label_cols, decoded)}
    values = np.column_stack(columns) if columns else np.empty((len(kept), 0))
    return Dataset(values, labels, list(numeric_cols) + list(binary_spec), extra, label_names)


def _decode_labels(raw):
    try:
        ints = np.array([int(v) for v in raw])
        return ints, tuple(str(v) for v in np.unique(ints))
    except ValueError:
        names = tuple(sorted(set(raw)))
        lookup = {name: i for i, name in enumerate(names)}
        return np.array([lookup[v] for v in raw]), names


def save_csv(data: Dataset, path, label_columns: Optional[Mapping[str, np.ndarray]] = None) -> None:
    """Write a dataset (plus its label vectors) as CSV with a header row."""
    names = list(data.column_names or [f"x{i + 1}" for i in range(data.d)])
    labels = {}
    if data.labels is not None:
        labels["label"] = data.labels
    labels.update(data.extra_labels)
    labels.update(label_columns or {})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + list(labels))
        for i in range(data.n):
            writer.writerow([repr(float(v)) for v in data.values[i]] +
                            [int(vec[i]) for vec in labels.values()])


# --------------------------------------------------------------------------
# IDX (MNIST family)


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx_images(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise DataFormatError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{path}: bad image magic 0x{magic:08x}")
    expected = count * rows * cols
    if len(raw) - 16 < expected:
        raise DataFormatError(f"{path}: truncated file ({len(raw) - 16} of {expected} pixel bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=16).reshape(count, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise DataFormatError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{path}: bad label magic 0x{magic:08x}")
    if len(raw) - 8 < count:
        raise DataFormatError(f"{path}: truncated file ({len(raw) - 8} of {count} labels)")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).astype(int)


def load_idx(images_path, labels_path=None) -> Dataset:
    """Load IDX images (flattened, scaled to [0, 1]) and optional labels."""
    images = read_idx_images(images_path)
    labels = None
    if labels_path is not None:
        labels = read_idx_labels(labels_path)
        if len(labels) != len(images):
            raise DataFormatError(
                f"{len(images)} images but {len(labels)} labels")
    return Dataset(images.astype(float) / 255.0, labels)


# --------------------------------------------------------------------------
# complex (superimposed) data


@dataclass(frozen=True)
class ComplexSpec:
    classes: Tuple[int, int] = (8, 9)  # Fashion-MNIST bag, ankle boot
    n_complex: int = 6000
    n_background: int = 1000
    seed: int = 0


def superimpose(reference: Dataset, background: Dataset, spec: ComplexSpec = ComplexSpec()) -> Dataset:
    """Overlay reference images of two classes with random background images.

    Each complex sample is the pixelwise sum, clipped to 1, of a reference
    image and a background image drawn uniformly with replacement. The
    classes contribute ``n_complex // 2`` rows each, drawn without
    replacement. Reference labels are kept; the background labels go to
    ``extra_labels['background']``.
    """
    if reference.d != background.d:
        raise ValidationError("reference and background images differ in size")
    if reference.labels is None:
        raise ValidationError("reference data needs labels")
    for name, data in (("reference", reference), ("background", background)):
        if data.values.min() < 0 or data.values.max() > 1:
            raise ValidationError(f"{name} pixels must lie in [0, 1]")
    rng = np.random.default_rng(spec.seed)
    per_class = spec.n_complex // len(spec.classes)
    picks = []
    for c in spec.classes:
        pool = np.flatnonzero(reference.labels == c)
        if pool.size == 0:
            raise ValidationError(f"class {c} absent from reference labels")
        if pool.size < per_class:
            raise ValidationError(f"class {c} has {pool.size} rows, need {per_class}")
        picks.append(rng.choice(pool, per_class, replace=False))
    rows = np.concatenate(picks)
    bg_rows = rng.integers(0, background.n, rows.size)
    values = np.minimum(reference.values[rows] + background.values[bg_rows], 1.0)
    extra = {}
    if background.labels is not None:
        extra["background"] = background.labels[bg_rows]
    return Dataset(values, reference.labels[rows], None, extra)


def sample_rows(data: Dataset, n: int, seed: int = 0) -> Dataset:
    """Seeded subsample without replacement (all rows, shuffled, if n >= data.n)."""
    rng = np.random.default_rng(seed)
    rows = rng.permutation(data.n)[:n]
    return data.subset(np.sort(rows))


# --------------------------------------------------------------------------
# preprocessing


@dataclass(frozen=True)
class Preprocessor:
    """Centering and optional projection onto leading right singular vectors."""

    mean: np.ndarray
    components: Optional[np.ndarray] = None  # d x svd_dims
    retained_variance: float = 1.0

    def apply(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float) - self.mean
        return M if self.components is None else M @ self.components

    def inverse(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        if self.components is not None:
            M = M @ self.components.T
        return M + self.mean


def preprocess(data: Dataset, center: bool = True, svd_dims: Optional[int] = None):
    """Centre (optionally) and reduce to ``svd_dims`` singular directions.

    Returns the transformed dataset and the fitted :class:`Preprocessor`,
    which applies the identical map to prior samples.
    """
    X = data.values
    mean = X.mean(axis=0) if center else np.zeros(data.d)
    Xc = X - mean
    components = None
    retained = 1.0
    if svd_dims is not None:
        if not 1 <= svd_dims <= min(data.n, data.d):
            raise ValidationError(f"svd_dims must lie in [1, {min(data.n, data.d)}], got {svd_dims}")
        _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
        components = Vt[:svd_dims].T
        total = float(np.sum(s ** 2))
        retained = float(np.sum(s[:svd_dims] ** 2) / total) if total > 0 else 1.0
    prep = Preprocessor(mean, components, retained)
    names = data.column_names if components is None else [f"sv{i + 1}" for i in range(svd_dims)]
    out = Dataset(prep.apply(X), data.labels, names, data.extra_labels, data.label_names)
    return out, prep
