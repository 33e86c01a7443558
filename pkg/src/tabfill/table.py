"""Mixed-type table primitives: CSV parsing, column profiles, label codes.

Every cell is one of three things: a finite float, a non-empty string, or
missing (``None``). All downstream stages build on that trichotomy.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

Cell = float | str | None  # None marks a missing cell


class ColumnKind(str, Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"
    BOOLEAN = "boolean"
    EXCLUDED = "excluded"


# Columns are typed by majority vote: a kind must cover strictly more than
# this share of all cells (missing included) to claim the column.
TYPE_MAJORITY_THRESHOLD = 0.6


@dataclass(frozen=True)
class ColumnProfile:
    """Per-column summary used to route imputation."""

    kind: ColumnKind
    frac_numeric: float
    frac_text: float
    n_missing: int
    categories: tuple[str, ...] = ()

    @property
    def n_categories(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class LabelMap:
    """Bijective label <-> code mapping; code i is the i-th label in
    ascending lexicographic byte order, so two columns with the same label
    multiset always produce the same map."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if list(self.labels) != sorted(set(self.labels)):
            raise ValueError("labels must be distinct and sorted")

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def code_of(self, label: str) -> int:
        try:
            return self._index()[label]
        except KeyError:
            raise ValueError(f"label {label!r} not present in map") from None

    def label_of(self, code: int) -> str:
        return self.labels[code]

    def _index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}


@dataclass(frozen=True)
class Table:
    """Immutable mixed-type table with row identifiers and a header."""

    row_ids: tuple[str, ...]
    column_names: tuple[str, ...]
    cells: tuple[tuple[Cell, ...], ...]  # row-major
    id_name: str = "Sample"

    def __post_init__(self) -> None:
        if len(set(self.column_names)) != len(self.column_names):
            raise ValueError("column names must be unique")
        if len(self.cells) != len(self.row_ids):
            raise ValueError("row_ids length must match row count")
        for i, row in enumerate(self.cells):
            if len(row) != len(self.column_names):
                raise ValueError(f"row {i} has {len(row)} cells, expected {len(self.column_names)}")

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    @property
    def n_cols(self) -> int:
        return len(self.column_names)

    def column(self, j: int) -> tuple[Cell, ...]:
        return tuple(row[j] for row in self.cells)

    def with_cells(self, cells: Sequence[Sequence[Cell]]) -> "Table":
        return Table(
            row_ids=self.row_ids,
            column_names=self.column_names,
            cells=tuple(tuple(row) for row in cells),
            id_name=self.id_name,
        )


def _parse_field(token: str) -> Cell:
    """Lex one CSV field: empty -> missing, decimal/scientific float ->
    number (non-finite parses are missing), anything else -> text."""
    if token == "":
        return None
    stripped = token.strip()
    # float() would accept underscore separators; CSV numerics should not.
    if stripped and "_" not in stripped:
        try:
            value = float(stripped)
        except ValueError:
            pass
        else:
            return value if math.isfinite(value) else None
    return token


def parse_csv(data: bytes | str) -> Table:
    """Parse RFC-4180-style CSV with a header row; the first header cell
    names the ID column and the first field of each row is the sample ID."""
    text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]  # tolerate trailing blank lines
    if not rows:
        raise ValueError("empty CSV: no header row")
    header = rows[0]
    if not header or not header[0:]:
        raise ValueError("empty CSV header")
    id_name = header[0]
    column_names = tuple(header[1:])
    if len(set(column_names)) != len(column_names):
        dupes = sorted({c for c in column_names if column_names.count(c) > 1})
        raise ValueError(f"duplicate column names: {dupes}")
    if len(rows) == 1:
        raise ValueError("CSV has zero data rows")
    row_ids: list[str] = []
    body: list[tuple[Cell, ...]] = []
    for i, raw in enumerate(rows[1:], start=1):
        if len(raw) != len(header):
            raise ValueError(
                f"ragged row {i}: {len(raw)} fields, expected {len(header)}"
            )
        row_ids.append(raw[0])
        body.append(tuple(_parse_field(tok) for tok in raw[1:]))
    return Table(
        row_ids=tuple(row_ids),
        column_names=column_names,
        cells=tuple(body),
        id_name=id_name,
    )


def _format_field(cell: Cell) -> str:
    if cell is None:
        return ""
    if isinstance(cell, float):
        return repr(cell)  # shortest round-trip representation
    return cell


def write_csv(table: Table) -> bytes:
    """Serialize a table: UTF-8, comma separator, missing as the empty
    field, quoting only where needed. parse_csv(write_csv(t)) == t
    cell-for-cell for engine-produced tables."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([table.id_name, *table.column_names])
    for rid, row in zip(table.row_ids, table.cells):
        writer.writerow([rid, *(_format_field(c) for c in row)])
    return buf.getvalue().encode("utf-8")


def profile_column(cells: Sequence[Cell]) -> ColumnProfile:
    """Profile one column and assign its kind by the majority-type rule.

    A kind is assigned only when it covers strictly more than 60% of the
    column's contents, i.e. of the observed (non-missing) cells; otherwise
    the column is excluded from imputation. Judging the majority over
    observed cells keeps heavily-missing columns imputable. The reported
    frac_numeric/frac_text are over all cells (the remainder is missing).
    """
    if not cells:
        raise ValueError("cannot profile an empty column")
    n = len(cells)
    n_num = sum(1 for c in cells if isinstance(c, float))
    n_text = sum(1 for c in cells if isinstance(c, str))
    n_observed = n_num + n_text
    n_missing = n - n_observed
    frac_numeric = n_num / n
    frac_text = n_text / n
    if n_observed and n_num / n_observed > TYPE_MAJORITY_THRESHOLD:
        kind = ColumnKind.CONTINUOUS
        categories: tuple[str, ...] = ()
    elif n_observed and n_text / n_observed > TYPE_MAJORITY_THRESHOLD:
        categories = tuple(sorted({c for c in cells if isinstance(c, str)}))
        kind = ColumnKind.BOOLEAN if len(categories) == 2 else ColumnKind.CATEGORICAL
    else:
        kind = ColumnKind.EXCLUDED
        categories = ()
    return ColumnProfile(
        kind=kind,
        frac_numeric=frac_numeric,
        frac_text=frac_text,
        n_missing=n_missing,
        categories=categories,
    )


def encode_labels(
    cells: Sequence[Cell], profile: ColumnProfile
) -> tuple[list[Cell], LabelMap]:
    """Replace text labels with their numeric codes; missing is preserved."""
    if profile.kind not in (ColumnKind.CATEGORICAL, ColumnKind.BOOLEAN):
        raise ValueError(f"cannot label-encode a {profile.kind.value} column")
    mapping = LabelMap(labels=profile.categories)
    index = {lab: i for i, lab in enumerate(profile.categories)}
    out: list[Cell] = []
    for c in cells:
        if isinstance(c, str):
            if c not in index:
                raise ValueError(f"label {c!r} absent from column categories")
            out.append(float(index[c]))
        else:
            out.append(c)
    return out, mapping


def decode_labels(values: Sequence[float], mapping: LabelMap) -> list[Cell]:
    """Map numeric codes back to labels. Fractional predictions round
    half-up to the nearest code, then clamp into the valid code range."""
    k = mapping.n_labels
    if k == 0:
        raise ValueError("cannot decode with an empty label map")
    out: list[Cell] = []
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"cannot decode non-finite value {v!r}")
        code = int(math.floor(v + 0.5))
        code = min(max(code, 0), k - 1)
        out.append(mapping.label_of(code))
    return out
