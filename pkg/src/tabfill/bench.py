"""Benchmark harness: random masking with ground truth, RMSE and categorical
accuracy, mean/KNN baselines, timing, and density-curve emission.
"""

from __future__ import annotations

import json
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import ImputeConfig, impute_table
from .preprocess import (
    ColumnMean,
    Knn,
    classify_columns,
    normalize_missing_tokens,
    preprocess_table,
)
from .table import Cell, ColumnKind, Table, decode_labels

DENSITY_POINTS = 128
MaskScope = str  # "all" | "continuous" | "categorical"


@dataclass(frozen=True)
class MaskSpec:
    fraction: float
    seed: int
    scope: MaskScope = "all"

    def __post_init__(self) -> None:
        if not 0 < self.fraction < 1:
            raise ValueError(f"mask fraction must be in (0, 1) (got {self.fraction})")
        if self.scope not in ("all", "continuous", "categorical"):
            raise ValueError(f"unknown mask scope {self.scope!r}")


@dataclass
class BenchRow:
    method: str
    fraction: float
    rmse: float | None
    mse: float | None
    categorical_accuracy: float | None
    wall_time_ms: float
    n_masked: int


@dataclass
class DensityCurve:
    method: str
    fraction: float
    column: str
    abscissa: np.ndarray
    density_original: np.ndarray
    density_imputed: np.ndarray


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    densities: list[DensityCurve] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "rows": [vars(r) for r in self.rows],
            "failures": self.failures,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _scoped_kinds(scope: MaskScope) -> set[ColumnKind]:
    if scope == "continuous":
        return {ColumnKind.CONTINUOUS}
    if scope == "categorical":
        return {ColumnKind.CATEGORICAL, ColumnKind.BOOLEAN}
    return {ColumnKind.CONTINUOUS, ColumnKind.CATEGORICAL, ColumnKind.BOOLEAN}


def mask_random(
    table: Table, spec: MaskSpec
) -> tuple[Table, list[tuple[int, int, Cell]]]:
    """Hide exactly floor(fraction * eligible) observed cells, uniformly
    without replacement, and return the ground truth.

    Cells already missing are never masked, and a draw that would leave a
    column with no observed cell is rejected and redrawn. Eligibility is
    judged on the classified table, so only cells the engine can recover
    (matching their column's kind) are candidates.
    """
    classified, profiles = classify_columns(normalize_missing_tokens(table))
    kinds = _scoped_kinds(spec.scope)
    eligible: list[tuple[int, int]] = []
    per_column: dict[int, int] = {}
    for j, profile in enumerate(profiles):
        if profile.kind not in kinds:
            continue
        col = classified.column(j)
        for i, cell in enumerate(col):
            if cell is not None:
                eligible.append((i, j))
                per_column[j] = per_column.get(j, 0) + 1
    if not eligible:
        raise ValueError("no eligible observed cells in scope")
    count = int(math.floor(spec.fraction * len(eligible)))
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(eligible))
    chosen: list[tuple[int, int]] = []
    remaining = dict(per_column)
    for pos in order:
        if len(chosen) == count:
            break
        i, j = eligible[pos]
        if remaining[j] <= 1:
            continue  # would empty the column; redraw
        remaining[j] -= 1
        chosen.append((i, j))
    if len(chosen) < count:
        raise ValueError(
            "mask fraction too large: a column cannot retain one observed value"
        )
    chosen.sort()
    cells = [list(row) for row in table.cells]
    truth: list[tuple[int, int, Cell]] = []
    for i, j in chosen:
        truth.append((i, j, table.cells[i][j]))
        cells[i][j] = None
    return table.with_cells(cells), truth


def rmse(imputed: Table, truth: list[tuple[int, int, Cell]]) -> float:
    """Root mean squared error over the numeric ground-truth cells."""
    if not truth:
        raise ValueError("empty ground truth")
    sq = []
    for i, j, original in truth:
        if not isinstance(original, float):
            raise ValueError(f"truth cell ({i}, {j}) is not continuous")
        got = imputed.cells[i][j]
        if not isinstance(got, float):
            raise ValueError(f"imputed cell ({i}, {j}) is not a number: {got!r}")
        sq.append((got - original) ** 2)
    return float(np.sqrt(np.mean(sq)))


def categorical_accuracy(imputed: Table, truth: list[tuple[int, int, Cell]]) -> float:
    """Fraction of masked categorical cells recovered exactly."""
    if not truth:
        raise ValueError("empty ground truth")
    hits = 0
    for i, j, original in truth:
        if not isinstance(original, str):
            raise ValueError(f"truth cell ({i}, {j}) is not categorical")
        hits += imputed.cells[i][j] == original
    return hits / len(truth)


def baseline_impute(table: Table, method: ColumnMean | Knn) -> Table:
    """Run a pre-imputation strategy as a standalone imputer and decode."""
    triple = preprocess_table(table, impute_zeros=False, strategy=method)
    cells = [list(row) for row in triple.clean.cells]
    missing = np.isnan(triple.encoded)
    for pos, j in enumerate(triple.imputable_columns):
        rows = np.flatnonzero(missing[:, pos])
        if rows.size == 0:
            continue
        values = triple.preimputed[rows, pos]
        if triple.profiles[j].kind == ColumnKind.CONTINUOUS:
            for r, v in zip(rows, values):
                cells[r][j] = float(v)
        else:
            labels = decode_labels(values, triple.maps[j])
            for r, lab in zip(rows, labels):
                cells[r][j] = lab
    return triple.clean.with_cells(cells)


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule of thumb for a Gaussian kernel."""
    n = len(values)
    if n < 2:
        return 1.0
    std = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    if spread <= 0:
        spread = max(abs(float(np.mean(values))), 1.0) * 1e-3
    return 0.9 * spread * n ** (-0.2)


def gaussian_kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    bw = silverman_bandwidth(values)
    z = (grid[:, None] - values[None, :]) / bw
    return np.exp(-0.5 * z * z).sum(axis=1) / (len(values) * bw * np.sqrt(2 * np.pi))


def _density_curve(
    method: str, fraction: float, name: str, original: np.ndarray, imputed: np.ndarray
) -> DensityCurve:
    lo = min(original.min(), imputed.min())
    hi = max(original.max(), imputed.max())
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    grid = np.linspace(lo - pad, hi + pad, DENSITY_POINTS)
    return DensityCurve(
        method=method,
        fraction=fraction,
        column=name,
        abscissa=grid,
        density_original=gaussian_kde(original, grid),
        density_imputed=gaussian_kde(imputed, grid),
    )


def _numeric_column(table: Table, j: int) -> np.ndarray:
    return np.asarray(
        [c for c in table.column(j) if isinstance(c, float)], dtype=np.float64
    )


def run_benchmark(
    table: Table,
    fractions: list[float],
    methods: list[str],
    config: ImputeConfig | None = None,
    seed: int = 0,
    scope: MaskScope = "all",
    knn_k: int = 5,
) -> BenchReport:
    """Mask, impute, and score each fraction x method cell.

    ``methods`` entries: "engine" (the full pipeline under ``config``),
    "mean", or "knn". The same mask is reused across methods at a given
    fraction so the comparison is paired. Per-cell failures are recorded and
    the remaining cells still run.
    """
    config = config or ImputeConfig()
    config.validate()
    for f in fractions:
        if not 0 < f < 1:
            raise ValueError(f"fractions must be in (0, 1) (got {f})")
    known = {"engine", "mean", "knn"}
    for m in methods:
        if m not in known:
            raise ValueError(f"unknown method {m!r} (expected one of {sorted(known)})")
    report = BenchReport()
    _, base_profiles = classify_columns(normalize_missing_tokens(table))
    for fi, fraction in enumerate(fractions):
        masked, truth = mask_random(
            table, MaskSpec(fraction=fraction, seed=seed + fi, scope=scope)
        )
        numeric_truth = [t for t in truth if isinstance(t[2], float)]
        text_truth = [t for t in truth if isinstance(t[2], str)]
        for method in methods:
            try:
                t0 = time.perf_counter()
                if method == "engine":
                    imputed, _ = impute_table(masked, config)
                elif method == "mean":
                    imputed = baseline_impute(masked, ColumnMean())
                else:
                    imputed = baseline_impute(masked, Knn(k=knn_k))
                wall_ms = (time.perf_counter() - t0) * 1000.0
                row = BenchRow(
                    method=method,
                    fraction=fraction,
                    rmse=rmse(imputed, numeric_truth) if numeric_truth else None,
                    mse=None,
                    categorical_accuracy=(
                        categorical_accuracy(imputed, text_truth) if text_truth else None
                    ),
                    wall_time_ms=wall_ms,
                    n_masked=len(truth),
                )
                if row.rmse is not None:
                    row.mse = row.rmse**2
                report.rows.append(row)
                for j, profile in enumerate(base_profiles):
                    if profile.kind != ColumnKind.CONTINUOUS:
                        continue
                    original = _numeric_column(table, j)
                    filled = _numeric_column(imputed, j)
                    if len(original) < 2 or len(filled) < 2:
                        continue
                    report.densities.append(
                        _density_curve(
                            method, fraction, table.column_names[j], original, filled
                        )
                    )
            except Exception as exc:  # record the failing cell, keep going
                report.failures.append(
                    {
                        "method": method,
                        "fraction": fraction,
                        "error": f"{type(exc).__name__}: {exc}",
                        "trace": traceback.format_exc(limit=3),
                    }
                )
    return report


def write_report_csv(report: BenchReport, path: str | Path) -> None:
    """One row per fraction x method x metric."""
    lines = ["fraction,method,metric,value"]
    for row in report.rows:
        metrics = {
            "rmse": row.rmse,
            "mse": row.mse,
            "categorical_accuracy": row.categorical_accuracy,
            "wall_time_ms": row.wall_time_ms,
            "n_masked": row.n_masked,
        }
        for name, value in metrics.items():
            if value is None:
                continue
            lines.append(f"{row.fraction!r},{row.method},{name},{value!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_density_csv(report: BenchReport, path: str | Path) -> None:
    lines = ["method,fraction,column,abscissa,density_original,density_imputed"]
    for curve in report.densities:
        for x, do, di in zip(
            curve.abscissa, curve.density_original, curve.density_imputed
        ):
            lines.append(
                f"{curve.method},{curve.fraction!r},{curve.column},{x!r},{do!r},{di!r}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _svg_polyline(xs, ys, x0, x1, y0, y1, width, height, margin, color) -> str:
    pts = []
    for x, y in zip(xs, ys):
        px = margin + (x - x0) / (x1 - x0) * (width - 2 * margin)
        py = height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)
        pts.append(f"{px:.2f},{py:.2f}")
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
        f'points="{" ".join(pts)}"/>'
    )


def write_density_svg(curve: DensityCurve, path: str | Path) -> None:
    """Minimal standalone SVG line plot of the two density curves."""
    width, height, margin = 640, 400, 40
    x0, x1 = float(curve.abscissa[0]), float(curve.abscissa[-1])
    ymax = max(float(curve.density_original.max()), float(curve.density_imputed.max()))
    ymax = ymax if ymax > 0 else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{margin}" y="20" font-family="sans-serif" font-size="14">'
        f"{curve.column} (method={curve.method}, fraction={curve.fraction})</text>",
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        'stroke="black"/>',
        _svg_polyline(
            curve.abscissa, curve.density_original, x0, x1, 0.0, ymax,
            width, height, margin, "#1f77b4",
        ),
        _svg_polyline(
            curve.abscissa, curve.density_imputed, x0, x1, 0.0, ymax,
            width, height, margin, "#d62728",
        ),
        f'<text x="{width - 200}" y="20" font-family="sans-serif" font-size="12" '
        'fill="#1f77b4">original</text>',
        f'<text x="{width - 120}" y="20" font-family="sans-serif" font-size="12" '
        'fill="#d62728">imputed</text>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def write_density_svgs_for_tables(original: Table, imputed: Table, triple, out_dir) -> None:
    """Engine-side plots: density of each continuous column before vs after."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for j in triple.imputable_columns:
        if triple.profiles[j].kind != ColumnKind.CONTINUOUS:
            continue
        vals_orig = _numeric_column(original, j)
        vals_imp = _numeric_column(imputed, j)
        if len(vals_orig) < 2 or len(vals_imp) < 2:
            continue
        curve = _density_curve("engine", 0.0, original.column_names[j], vals_orig, vals_imp)
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in curve.column)
        write_density_svg(curve, out / f"density_{safe}.svg")


__all__ = [
    "MaskSpec",
    "BenchRow",
    "DensityCurve",
    "BenchReport",
    "mask_random",
    "rmse",
    "categorical_accuracy",
    "baseline_impute",
    "run_benchmark",
    "write_report_csv",
    "write_density_csv",
    "write_density_svg",
    "silverman_bandwidth",
    "gaussian_kde",
]
