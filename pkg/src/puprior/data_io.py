"""Synthetic generators, CSV ingestion, PCA and PU splits.

CSV files are UTF-8, comma separated, with one header row; an optional
final column named ``y`` carries labels.  Line numbers in error messages
count the header as line 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Dataset
from .errors import DataError, InvalidParameterError, ShapeError


@dataclass(frozen=True)
class SyntheticSpec:
    """Positives ~ U(0, 1); negatives ~ U(1 - gamma, 2 - gamma).

    The positive density has mass ``1 - gamma`` where the classes do not
    overlap (``[0, 1 - gamma)``) and ``gamma`` where they do.
    """

    gamma: float
    prior: float
    n: int
    n_prime: int
    seed: int = 0
    exact_counts: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 < self.prior < 1.0:
            raise InvalidParameterError(f"prior must lie in (0, 1), got {self.prior}")
        if self.n < 1 or self.n_prime < 1:
            raise InvalidParameterError("sample sizes must be >= 1")


@dataclass(frozen=True, eq=False)
class LabeledTable:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels).astype(np.int64).ravel()
        if x.ndim != 2:
            raise ShapeError("features must be a 2-d matrix")
        if x.shape[0] != y.size:
            raise ShapeError(f"{x.shape[0]} feature rows but {y.size} labels")
        if not np.isin(y, (-1, 1)).all():
            raise DataError("labels must be +1 or -1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.size


@dataclass(frozen=True, eq=False)
class PUSample:
    """A PU dataset plus the hidden truth needed for evaluation."""

    data: Dataset
    unlabeled_labels: np.ndarray
    test: LabeledTable | None = None
    indices: tuple | None = None  # table rows of (positives, unlabeled, test)


def uniform_pair(gamma: float) -> tuple[tuple[float, float], tuple[float, float]]:
    return (0.0, 1.0), (1.0 - gamma, 2.0 - gamma)


def _mixture_labels(rng, count, prior, exact):
    if exact:
        labels = np.zeros(count, dtype=bool)
        labels[: int(round(prior * count))] = True
        return rng.permutation(labels)
    return rng.random(count) < prior


def generate_synthetic(spec: SyntheticSpec) -> PUSample:
    rng = np.random.default_rng(spec.seed)
    (pl, pu), (nl, nu) = uniform_pair(spec.gamma)
    positives = rng.uniform(pl, pu, spec.n)
    is_pos = _mixture_labels(rng, spec.n_prime, spec.prior, spec.exact_counts)
    unlabeled = np.where(is_pos, rng.uniform(pl, pu, spec.n_prime), rng.uniform(nl, nu, spec.n_prime))
    return PUSample(Dataset(positives, unlabeled), np.where(is_pos, 1, -1))


def bayes_error(gamma: float, prior: float) -> float:
    """Misclassification rate of the Bayes rule for the uniform pair.

    Outside the overlap each class is identified without error; on the
    overlap both densities equal 1, so the rule picks the larger prior and
    errs with the smaller one.
    """
    return gamma * min(prior, 1.0 - prior)


# -- CSV -------------------------------------------------------------------------


def _parse_float(token: str, line: int, column: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"line {line}: column {column!r}: cannot parse {token!r}", line) from None
    if not math.isfinite(value):
        raise DataError(f"line {line}: column {column!r}: non-finite value {token!r}", line)
    return value


def read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row]
    if not rows:
        return [], []
    return [h.strip() for h in rows[0][1]], rows[1:]


def load_csv(path, has_label: bool | None = None, positive_class: str | None = None):
    """Read a numeric CSV.

    Returns a matrix, or a :class:`LabeledTable` when the file carries a
    label column (``has_label=True``, or a final column named ``y`` when
    ``has_label`` is None).  Labels must be +1/-1 unless ``positive_class``
    is given, in which case rows whose label equals it become +1 and all
    others -1.  A file with no rows at all yields a 0 x 0 matrix.
    """
    header, rows = read_rows(path)
    if not header:
        return np.empty((0, 0))
    if has_label is None:
        has_label = header[-1].lower() == "y"
    width = len(header)
    if has_label and width < 2:
        raise DataError("a labeled file needs at least one feature column", 1)
    values, labels = [], []
    for line, row in rows:
        if len(row) != width:
            raise DataError(f"line {line}: expected {width} columns, found {len(row)}", line)
        feats = row[:-1] if has_label else row
        values.append([_parse_float(tok, line, header[j]) for j, tok in enumerate(feats)])
        if has_label:
            tok = row[-1].strip()
            if positive_class is not None:
                labels.append(1 if _same_label(tok, positive_class) else -1)
            else:
                lab = _parse_float(tok, line, header[-1])
                if lab not in (1.0, -1.0):
                    raise DataError(f"line {line}: label must be +1 or -1, got {tok!r}", line)
                labels.append(int(lab))
    d = width - 1 if has_label else width
    x = np.array(values, dtype=np.float64).reshape(len(values), d)
    if has_label:
        return LabeledTable(x, np.array(labels, dtype=np.int64))
    return x


def _same_label(token: str, target: str) -> bool:
    try:
        return float(token) == float(target)
    except ValueError:
        return token == str(target).strip()


def feature_names(d: int) -> list[str]:
    return [f"x{j + 1}" for j in range(d)]


def write_csv(path, features, labels=None, header=None) -> None:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    header = list(header) if header is not None else feature_names(x.shape[1])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header + (["y"] if labels is not None else []))
        for i, row in enumerate(x):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                cells.append(str(int(labels[i])))
            out.writerow(cells)


# -- PCA -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PCAResult:
    mean: np.ndarray
    components: np.ndarray  # (dims, d), rows are unit-norm loadings
    explained_variance: np.ndarray

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T


def pca_fit(x, dims: int) -> PCAResult:
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1]
    if not 1 <= dims <= d:
        raise InvalidParameterError(f"dims must lie in [1, {d}], got {dims}")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    comps = vt[:dims]
    # sign convention: each component's largest-magnitude loading is positive
    idx = np.argmax(np.abs(comps), axis=1)
    comps = comps * np.sign(comps[np.arange(dims), idx])[:, None]
    var = s[:dims] ** 2 / max(x.shape[0] - 1, 1)
    return PCAResult(mean, comps, var)


def pca_reduce(table: LabeledTable, dims: int) -> LabeledTable:
    return LabeledTable(pca_fit(table.features, dims).transform(table.features), table.labels)


# -- PU split --------------------------------------------------------------------


def make_pu_split(
    table: LabeledTable,
    n_positive: int,
    n_unlabeled: int,
    unlabeled_prior: float,
    seed: int = 0,
    exact_counts: bool = False,
) -> PUSample:
    """Disjoint positive sample, unlabeled sample and labeled test set.

    The number of positives in the unlabeled sample is binomial with rate
    ``unlabeled_prior`` (exactly rounded with ``exact_counts``).  Every row
    not drawn goes to the test set.
    """
    if not 0.0 <= unlabeled_prior <= 1.0:
        raise InvalidParameterError(f"unlabeled_prior must lie in [0, 1], got {unlabeled_prior}")
    if n_positive < 1 or n_unlabeled < 1:
        raise InvalidParameterError("sample sizes must be >= 1")
    rng = np.random.default_rng(seed)
    pos_idx = rng.permutation(np.flatnonzero(table.labels == 1))
    neg_idx = rng.permutation(np.flatnonzero(table.labels == -1))
    if exact_counts:
        k = int(round(unlabeled_prior * n_unlabeled))
    else:
        k = int(rng.binomial(n_unlabeled, unlabeled_prior))
    if n_positive + k > pos_idx.size:
        raise DataError(
            f"need {n_positive + k} positive rows, table has {pos_idx.size}"
        )
    if n_unlabeled - k > neg_idx.size:
        raise DataError(f"need {n_unlabeled - k} negative rows, table has {neg_idx.size}")
    x_idx = pos_idx[:n_positive]
    u_idx = rng.permutation(np.concatenate([pos_idx[n_positive:n_positive + k], neg_idx[: n_unlabeled - k]]))
    used = np.zeros(len(table), dtype=bool)
    used[x_idx] = used[u_idx] = True
    test_idx = np.flatnonzero(~used)
    data = Dataset(table.features[x_idx], table.features[u_idx])
    test = LabeledTable(table.features[test_idx], table.labels[test_idx])
    return PUSample(data, table.labels[u_idx], test, (x_idx, u_idx, test_idx))
