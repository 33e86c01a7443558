"""Preprocessing stage: missing-token normalization, optional zero removal,
majority-rule column typing, label encoding, and the cheap first fill that
makes the matrix dense for the learners.

The stage produces three artifacts: the cleaned table (original values with
invalid tokens normalized and minority-type cells dropped), the label-encoded
numeric matrix with NaN markers, and a fully dense pre-imputed matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .table import (
    ColumnKind,
    ColumnProfile,
    LabelMap,
    Table,
    encode_labels,
    profile_column,
)

# Tokens treated as missing markers (exact match after trimming whitespace).
MISSING_TOKENS = frozenset(
    {"NaN", "NAN", "Nan", "nan", "NA", "#NA", "N/A", "NA#", "#VALUE!", "#DIV/0!"}
)


class ImputationWarning(UserWarning):
    """Non-fatal fallback taken during imputation (recorded in run reports)."""


@dataclass(frozen=True)
class ColumnMean:
    """Continuous gaps get the column mean; categorical gaps get the mode."""


@dataclass(frozen=True)
class Knn:
    """All gaps filled from the k nearest rows under a missing-aware metric."""

    k: int = 5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"knn k must be >= 1 (got {self.k})")


@dataclass(frozen=True)
class MixType:
    """Column mean for continuous gaps, nearest-neighbour fill for the rest."""

    k: int = 5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"knn k must be >= 1 (got {self.k})")


PreImputeStrategy = ColumnMean | Knn | MixType


@dataclass
class PreprocessedTriple:
    """The three preprocessing outputs plus the metadata to undo encoding.

    ``encoded`` and ``preimputed`` cover only the imputable columns, in the
    original column order; excluded columns survive verbatim in ``clean``.
    """

    clean: Table
    encoded: np.ndarray
    preimputed: np.ndarray
    profiles: list[ColumnProfile]
    maps: dict[int, LabelMap]  # original column index -> label map
    imputable_columns: list[int]  # original column indices, ascending

    @property
    def column_kinds(self) -> list[ColumnKind]:
        return [p.kind for p in self.profiles]


def normalize_missing_tokens(table: Table) -> Table:
    """Turn the recognised not-a-value spellings into missing cells."""
    new_rows = []
    for row in table.cells:
        new_rows.append(
            tuple(
                None if isinstance(c, str) and c.strip() in MISSING_TOKENS else c
                for c in row
            )
        )
    return table.with_cells(new_rows)


def zeros_to_missing(table: Table) -> Table:
    """Convert exact numeric zeros into missing cells (opt-in behaviour)."""
    new_rows = []
    for row in table.cells:
        new_rows.append(
            tuple(None if isinstance(c, float) and c == 0.0 else c for c in row)
        )
    return table.with_cells(new_rows)


def classify_columns(table: Table) -> tuple[Table, list[ColumnProfile]]:
    """Assign each column a kind and drop minority-type cells.

    Continuous columns lose their text cells, categorical columns lose their
    numeric cells; columns without a >60% majority are excluded and left
    untouched. Returned profiles describe the coerced columns, so applying
    the operation twice is a no-op.
    """
    n_rows, n_cols = table.n_rows, table.n_cols
    columns = [list(table.column(j)) for j in range(n_cols)]
    profiles: list[ColumnProfile] = []
    for j in range(n_cols):
        raw_profile = profile_column(columns[j])
        if raw_profile.kind == ColumnKind.CONTINUOUS:
            columns[j] = [c if isinstance(c, float) else None for c in columns[j]]
        elif raw_profile.kind in (ColumnKind.CATEGORICAL, ColumnKind.BOOLEAN):
            columns[j] = [c if isinstance(c, str) else None for c in columns[j]]
        profiles.append(profile_column(columns[j]))
    new_cells = [
        tuple(columns[j][i] for j in range(n_cols)) for i in range(n_rows)
    ]
    return table.with_cells(new_cells), profiles


def knn_impute(matrix: np.ndarray, k: int) -> np.ndarray:
    """Fill every missing entry from its k nearest rows.

    The distance between two rows is the missing-aware Euclidean distance
    sqrt(D/|S| * sum_{c in S} (x_c - y_c)^2) over the set S of columns
    observed in both rows, rescaled by the total column count D so rows with
    different overlap are comparable. A neighbour is eligible for entry
    (i, j) when it has column j observed and shares at least one observed
    column with row i; ties in distance resolve to the lower row index.
    Entries with no eligible neighbour (including every entry of a fully
    missing row) fall back to the column mean with a warning.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("knn_impute expects a 2-D matrix")
    n, d = x.shape
    if k < 1:
        raise ValueError(f"knn k must be >= 1 (got {k})")
    if k >= n:
        raise ValueError(f"knn k must be < row count (k={k}, rows={n})")
    observed = ~np.isnan(x)
    out = x.copy()
    if observed.all():
        return out
    col_means = np.empty(d)
    for j in range(d):
        vals = x[observed[:, j], j]
        col_means[j] = np.mean(vals) if vals.size else np.nan
    for i in range(n):
        miss_cols = np.flatnonzero(~observed[i])
        if miss_cols.size == 0:
            continue
        diff = np.where(observed[i], x[i], 0.0) - np.where(observed, x, 0.0)
        shared = observed[i] & observed
        sumsq = np.where(shared, diff * diff, 0.0).sum(axis=1)
        cnt = shared.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.sqrt(sumsq * (d / cnt))
        dist[cnt == 0] = np.inf
        dist[i] = np.inf
        for j in miss_cols:
            cand = dist.copy()
            cand[~observed[:, j]] = np.inf
            order = np.argsort(cand, kind="stable")
            order = order[np.isfinite(cand[order])]
            if order.size == 0:
                if np.isnan(col_means[j]):
                    raise ValueError(f"column {j} has no observed values")
                warnings.warn(
                    f"no eligible neighbours for entry ({i}, {j}); "
                    "falling back to the column mean",
                    ImputationWarning,
                    stacklevel=2,
                )
                out[i, j] = col_means[j]
            else:
                out[i, j] = np.mean(x[order[:k], j])
    return out


def _column_mean_fill(x: np.ndarray, observed: np.ndarray, j: int, name: str) -> float:
    vals = x[observed[:, j], j]
    if vals.size == 0:
        raise ValueError(f"column {name} has no observed values")
    return float(np.mean(vals))


def _column_mode_fill(x: np.ndarray, observed: np.ndarray, j: int, name: str) -> float:
    vals = x[observed[:, j], j]
    if vals.size == 0:
        raise ValueError(f"column {name} has no observed values")
    counts = np.bincount(vals.astype(np.int64))
    return float(np.argmax(counts))  # argmax resolves ties to the lowest code


def pre_impute(
    matrix: np.ndarray,
    profiles: Sequence[ColumnProfile],
    strategy: PreImputeStrategy,
    column_names: Sequence[str] | None = None,
) -> np.ndarray:
    """Make the encoded matrix dense with the configured cheap fill.

    Observed entries are never changed. ``profiles`` must align with the
    matrix columns (continuous vs categorical routing).
    """
    x = np.asarray(matrix, dtype=np.float64)
    n, d = x.shape
    if len(profiles) != d:
        raise ValueError("profiles must align with matrix columns")
    names = list(column_names) if column_names is not None else [str(j) for j in range(d)]
    observed = ~np.isnan(x)
    out = x.copy()
    categorical = [
        j
        for j in range(d)
        if profiles[j].kind in (ColumnKind.CATEGORICAL, ColumnKind.BOOLEAN)
    ]
    if isinstance(strategy, ColumnMean):
        for j in range(d):
            if observed[:, j].all():
                continue
            if j in categorical:
                fill = _column_mode_fill(x, observed, j, names[j])
            else:
                fill = _column_mean_fill(x, observed, j, names[j])
            out[~observed[:, j], j] = fill
    elif isinstance(strategy, Knn):
        for j in range(d):
            if not observed[:, j].any():
                raise ValueError(f"column {names[j]} has no observed values")
        out = knn_impute(x, strategy.k)
    elif isinstance(strategy, MixType):
        for j in range(d):
            if j in categorical or observed[:, j].all():
                continue
            out[~observed[:, j], j] = _column_mean_fill(x, observed, j, names[j])
        cat_missing = [j for j in categorical if not observed[:, j].all()]
        if cat_missing:
            for j in categorical:
                if not observed[:, j].any():
                    raise ValueError(f"column {names[j]} has no observed values")
            # neighbours are found on the mean-filled matrix: the mean step
            # runs first, knn handles the gaps that remain
            filled = knn_impute(out, strategy.k)
            for j in cat_missing:
                out[~observed[:, j], j] = filled[~observed[:, j], j]
    else:
        raise TypeError(f"unknown pre-imputation strategy: {strategy!r}")
    return out


def preprocess_table(
    table: Table,
    impute_zeros: bool = False,
    strategy: PreImputeStrategy = MixType(),
) -> PreprocessedTriple:
    """Run the full preprocessing chain and return all three artifacts."""
    clean = normalize_missing_tokens(table)
    if impute_zeros:
        clean = zeros_to_missing(clean)
    clean, profiles = classify_columns(clean)
    imputable = [
        j for j, p in enumerate(profiles) if p.kind != ColumnKind.EXCLUDED
    ]
    if not imputable:
        raise ValueError("nothing to impute: every column is excluded")
    n = clean.n_rows
    encoded = np.full((n, len(imputable)), np.nan)
    maps: dict[int, LabelMap] = {}
    for pos, j in enumerate(imputable):
        col = list(clean.column(j))
        if profiles[j].kind in (ColumnKind.CATEGORICAL, ColumnKind.BOOLEAN):
            col, mapping = encode_labels(col, profiles[j])
            maps[j] = mapping
        for i, c in enumerate(col):
            if isinstance(c, float):
                encoded[i, pos] = c
    names = [clean.column_names[j] for j in imputable]
    preimputed = pre_impute(
        encoded,
        [profiles[j] for j in imputable],
        strategy,
        column_names=names,
    )
    return PreprocessedTriple(
        clean=clean,
        encoded=encoded,
        preimputed=preimputed,
        profiles=profiles,
        maps=maps,
        imputable_columns=imputable,
    )
