"""Run orchestration: per-column boosted imputation with search gating,
seeded ensembles, sequential in-pass updates, iterative refinement with
parameter caching, and final label decoding.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boost import (
    BoostParams,
    default_params,
    fit_classifier,
    fit_regressor,
    predict,
    search_params,
)
from .factorize import adaptive_factorize
from .preprocess import (
    ImputationWarning,
    MixType,
    PreImputeStrategy,
    PreprocessedTriple,
    preprocess_table,
)
from .table import Cell, ColumnKind, Table, decode_labels, write_csv

logger = logging.getLogger(__name__)

ENSEMBLE_MIN = 3
ENSEMBLE_MAX = 9
TRIALS_MIN = 5
TRIALS_MAX = 50
ITERATIONS_MIN = 1
ITERATIONS_MAX = 9

GATE_MIN_SAMPLES = 50  # strictly more than this many rows
GATE_MIN_SAMPLE_FEATURE_RATIO = 4.0
GATE_MAX_MISSING_COLUMNS = 100

MEMBER_ROW_FRACTION = 0.7
_MEMBER_SEED_STRIDE = 1000
_SEARCH_SEED_OFFSET = 500


@dataclass(frozen=True)
class ImputeConfig:
    """Full run configuration; every documented range is enforced up front."""

    impute_zeros: bool = False
    pre_imputation: PreImputeStrategy = MixType()
    ensemble_size: int = 3
    mf_nan_replace: bool = False
    use_full_transform: bool = False
    search_enabled: bool = False
    search_trials: int = 5
    n_iterations: int = 1
    export_intermediates: bool = False
    save_result: bool = False
    save_plots: bool = False
    seed: int = 42

    def validate(self) -> None:
        if not isinstance(self.impute_zeros, bool):
            raise ValueError("impute_zeros must be a boolean")
        if not isinstance(self.pre_imputation, PreImputeStrategy):
            raise ValueError(
                "pre_imputation must be one of ColumnMean, Knn, MixType"
            )
        if not ENSEMBLE_MIN <= self.ensemble_size <= ENSEMBLE_MAX:
            raise ValueError(
                f"ensemble_size must be in [{ENSEMBLE_MIN}, {ENSEMBLE_MAX}] "
                f"(got {self.ensemble_size})"
            )
        if not isinstance(self.mf_nan_replace, bool):
            raise ValueError("mf_nan_replace must be a boolean")
        if not isinstance(self.use_full_transform, bool):
            raise ValueError("use_full_transform must be a boolean")
        if self.mf_nan_replace and self.use_full_transform:
            raise ValueError(
                "mf_nan_replace and use_full_transform cannot both be set"
            )
        if not isinstance(self.search_enabled, bool):
            raise ValueError("search_enabled must be a boolean")
        if not TRIALS_MIN <= self.search_trials <= TRIALS_MAX:
            raise ValueError(
                f"search_trials must be in [{TRIALS_MIN}, {TRIALS_MAX}] "
                f"(got {self.search_trials})"
            )
        if not ITERATIONS_MIN <= self.n_iterations <= ITERATIONS_MAX:
            raise ValueError(
                f"n_iterations must be in [{ITERATIONS_MIN}, {ITERATIONS_MAX}] "
                f"(got {self.n_iterations})"
            )
        if not isinstance(self.export_intermediates, bool):
            raise ValueError("export_intermediates must be a boolean")
        if not isinstance(self.save_result, bool):
            raise ValueError("save_result must be a boolean")
        if not isinstance(self.save_plots, bool):
            raise ValueError("save_plots must be a boolean")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValueError("seed must be an integer")


@dataclass
class ColumnPlan:
    table_col: int  # index into the original table
    encoded_col: int  # index into the encoded/design matrices
    name: str
    kind: ColumnKind
    n_classes: int  # 0 for regression targets
    missing_rows: np.ndarray  # sorted, from the original missing mask
    cached_params: BoostParams | None = None
    searched: bool = False

    @property
    def task(self) -> str:
        return "regression" if self.n_classes == 0 else "classification"


@dataclass
class ImputeState:
    triple: PreprocessedTriple
    clean_cells: list[list[Cell]]
    encoded: np.ndarray  # missing positions progressively filled
    design: np.ndarray  # always dense
    orig_missing: np.ndarray  # boolean mask over encoded
    plans: list[ColumnPlan]
    gate_ok: bool
    design_source: str = "none"  # none | nmf | svd
    column_log: list[dict] = field(default_factory=list)


@dataclass
class RunReport:
    columns: list[dict] = field(default_factory=list)
    passes: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    gate: dict = field(default_factory=dict)
    design_source: str = "none"  # none | nmf | svd
    total_wall_ms: float = 0.0

    def to_flat_dict(self) -> dict:
        """Flatten to single-level keys for the JSON document."""
        flat: dict = {
            "total_wall_ms": self.total_wall_ms,
            "design_source": self.design_source,
            "n_warnings": len(self.warnings),
        }
        for key, value in self.gate.items():
            flat[f"gate.{key}"] = value
        for rec in self.columns:
            prefix = f"column.{rec['name']}"
            for key, value in rec.items():
                if key == "name":
                    continue
                if key == "params":
                    for pk, pv in value.items():
                        flat[f"{prefix}.params.{pk}"] = pv
                else:
                    flat[f"{prefix}.{key}"] = value
        for rec in self.passes:
            prefix = f"pass.{rec['pass']}"
            for key, value in rec.items():
                if key != "pass":
                    flat[f"{prefix}.{key}"] = value
        for i, msg in enumerate(self.warnings):
            flat[f"warning.{i}"] = msg
        return flat

    def to_json(self) -> str:
        return json.dumps(self.to_flat_dict(), indent=2, sort_keys=True)


def gate_search(n_samples: int, n_features: int, n_missing_columns: int) -> bool:
    """Hyperparameter search runs only with more than 50 samples, a
    sample-to-feature ratio of at least 4, and at most 100 missing columns."""
    if min(n_samples, n_features, n_missing_columns) < 0:
        raise ValueError("counts must be non-negative")
    if n_samples <= GATE_MIN_SAMPLES:
        return False
    if n_features > 0 and n_samples / n_features < GATE_MIN_SAMPLE_FEATURE_RATIO:
        return False
    return n_missing_columns <= GATE_MAX_MISSING_COLUMNS


def iteration_delta(
    previous: np.ndarray, current: np.ndarray, missing_mask: np.ndarray
) -> float:
    """Mean absolute change over the originally-missing positions."""
    if previous.shape != current.shape or previous.shape != missing_mask.shape:
        raise ValueError("shape mismatch")
    if not missing_mask.any():
        return 0.0
    return float(np.mean(np.abs(previous[missing_mask] - current[missing_mask])))


def member_seed(base_seed: int, encoded_col: int, member_index: int) -> int:
    """Seed for one ensemble member; the seeds for ensemble size k are a
    prefix of those for k+1."""
    return base_seed + _MEMBER_SEED_STRIDE * encoded_col + member_index


def majority_vote(member_codes: np.ndarray, n_classes: int) -> np.ndarray:
    """Per-cell majority over member argmax codes; ties go to the lowest
    code. ``member_codes`` is (n_members, n_cells)."""
    out = np.empty(member_codes.shape[1])
    for col in range(member_codes.shape[1]):
        votes = np.bincount(member_codes[:, col].astype(np.int64), minlength=n_classes)
        out[col] = float(np.argmax(votes))
    return out


def _member_rows(
    rng: np.random.Generator, train_rows: np.ndarray, y: np.ndarray, n_classes: int
) -> np.ndarray:
    """Draw the member's 70% subsample of training rows (positions into
    train_rows); classification members always keep every class."""
    n = len(train_rows)
    k = min(n, max(2, int(round(MEMBER_ROW_FRACTION * n))))
    pos = rng.permutation(n)[:k]
    pos.sort()
    if n_classes > 0:
        present = set(np.unique(y[pos]).tolist())
        extras = []
        for c in range(n_classes):
            if c not in present:
                extras.append(int(np.flatnonzero(y == c)[0]))
        if extras:
            pos = np.unique(np.concatenate([pos, np.asarray(extras, dtype=pos.dtype)]))
    return pos


def build_state(triple: PreprocessedTriple, config: ImputeConfig) -> ImputeState:
    """Select the design matrix, build per-column plans, and evaluate the
    search gate once for the whole run."""
    encoded = triple.encoded.copy()
    orig_missing = np.isnan(triple.encoded)
    method = "none"
    if config.mf_nan_replace or config.use_full_transform:
        fact = adaptive_factorize(triple.encoded, triple.preimputed, seed=config.seed)
        design = fact.nan_replaced.copy() if config.mf_nan_replace else fact.fully_transformed.copy()
        method = fact.method
    else:
        design = triple.preimputed.copy()
    plans: list[ColumnPlan] = []
    for pos, j in enumerate(triple.imputable_columns):
        rows = np.flatnonzero(orig_missing[:, pos])
        if rows.size == 0:
            continue
        profile = triple.profiles[j]
        n_classes = (
            0
            if profile.kind == ColumnKind.CONTINUOUS
            else profile.n_categories
        )
        plans.append(
            ColumnPlan(
                table_col=j,
                encoded_col=pos,
                name=triple.clean.column_names[j],
                kind=profile.kind,
                n_classes=n_classes,
                missing_rows=rows,
            )
        )
    gate_ok = gate_search(
        n_samples=triple.encoded.shape[0],
        n_features=triple.encoded.shape[1],
        n_missing_columns=len(plans),
    )
    return ImputeState(
        triple=triple,
        clean_cells=[list(row) for row in triple.clean.cells],
        encoded=encoded,
        design=design,
        orig_missing=orig_missing,
        plans=plans,
        gate_ok=gate_ok,
        design_source=method,
    )


def impute_column(
    plan: ColumnPlan, state: ImputeState, config: ImputeConfig
) -> np.ndarray:
    """Train the per-column ensemble and write its predictions into the
    encoded matrix, the design matrix, and the cleaned cells.

    Returns the predictions for plan.missing_rows.
    """
    t0 = time.perf_counter()
    c = plan.encoded_col
    train_rows = np.flatnonzero(~state.orig_missing[:, c])
    x_all = np.delete(state.design, c, axis=1)
    y = state.encoded[train_rows, c]
    searched = False

    if train_rows.size < 2:
        warnings.warn(
            f"column {plan.name}: fewer than 2 observed rows; "
            "keeping pre-imputed values",
            ImputationWarning,
            stacklevel=2,
        )
        preds = state.triple.preimputed[plan.missing_rows, c].copy()
        params = None
    elif plan.n_classes == 1:
        # single observed label: nothing to learn, the answer is that label
        preds = np.zeros(plan.missing_rows.size)
        params = None
    else:
        if plan.cached_params is not None:
            params = plan.cached_params
        elif config.search_enabled and state.gate_ok:
            params = search_params(
                x_all[train_rows],
                y if plan.n_classes == 0 else y.astype(np.int64),
                plan.task,
                config.search_trials,
                seed=member_seed(config.seed, c, _SEARCH_SEED_OFFSET),
            )
            searched = True
        else:
            params = default_params(plan.task, train_rows.size, x_all.shape[1])
        member_preds = []
        y_codes = y.astype(np.int64) if plan.n_classes > 0 else y
        for i in range(config.ensemble_size):
            rng = np.random.default_rng(member_seed(config.seed, c, i))
            pos = _member_rows(rng, train_rows, y_codes, plan.n_classes)
            x_tr = x_all[train_rows[pos]]
            x_pred = x_all[plan.missing_rows]
            if plan.n_classes == 0:
                model = fit_regressor(x_tr, y[pos], params, seed=rng)
                member_preds.append(predict(model, x_pred))
            else:
                model = fit_classifier(
                    x_tr, y_codes[pos], params, seed=rng, n_classes=plan.n_classes
                )
                _, codes = predict(model, x_pred)
                member_preds.append(codes)
        stacked = np.vstack(member_preds)
        if plan.n_classes == 0:
            preds = np.mean(stacked, axis=0)
        else:
            preds = majority_vote(stacked, plan.n_classes)
        plan.cached_params = params
        plan.searched = plan.searched or searched

    state.encoded[plan.missing_rows, c] = preds
    state.design[plan.missing_rows, c] = preds
    if plan.n_classes == 0:
        for r, v in zip(plan.missing_rows, preds):
            state.clean_cells[r][plan.table_col] = float(v)
    else:
        mapping = state.triple.maps[plan.table_col]
        labels = decode_labels(preds, mapping)
        for r, lab in zip(plan.missing_rows, labels):
            state.clean_cells[r][plan.table_col] = lab
    wall_ms = (time.perf_counter() - t0) * 1000.0
    state.column_log.append(
        {
            "name": plan.name,
            "kind": plan.kind.value,
            "task": plan.task,
            "n_missing": int(plan.missing_rows.size),
            "searched": searched,
            "params": _params_dict(params),
            "wall_ms": wall_ms,
        }
    )
    logger.info(
        "imputed column %s (%s, %d missing) in %.0f ms",
        plan.name,
        plan.kind.value,
        plan.missing_rows.size,
        wall_ms,
    )
    return preds


def _params_dict(params: BoostParams | None) -> dict:
    if params is None:
        return {}
    return {
        "n_trees": params.n_trees,
        "learning_rate": params.learning_rate,
        "max_depth": params.max_depth,
        "min_samples_leaf": params.min_samples_leaf,
        "row_subsample": params.row_subsample,
        "column_subsample": params.column_subsample,
        "l2_leaf": params.l2_leaf,
    }


def run_pass(state: ImputeState, config: ImputeConfig, pass_index: int) -> ImputeState:
    """One sequential sweep over the planned columns, in ascending column
    order; each column's predictions are visible to all later columns."""
    logger.debug("pass %d over %d planned columns", pass_index, len(state.plans))
    for plan in state.plans:
        impute_column(plan, state, config)
    return state


def impute_table(
    table: Table,
    config: ImputeConfig | None = None,
    output_dir: str | Path | None = None,
) -> tuple[Table, RunReport]:
    """Run the full imputation pipeline on a parsed table."""
    config = config or ImputeConfig()
    config.validate()
    if table.n_rows == 0:
        raise ValueError("empty table: no rows to impute")
    t_start = time.perf_counter()
    report = RunReport()
    out_dir = Path(output_dir) if output_dir is not None else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ImputationWarning)
        triple = preprocess_table(
            table, impute_zeros=config.impute_zeros, strategy=config.pre_imputation
        )
        state = build_state(triple, config)
        if config.export_intermediates and out_dir is not None:
            _export_matrix(out_dir / "clean.csv", triple.clean)
            _export_numeric(out_dir / "encoded.csv", triple, triple.encoded)
            _export_numeric(out_dir / "preimputed.csv", triple, triple.preimputed)
            _export_numeric(out_dir / "design.csv", triple, state.design)
        previous = None
        for pass_index in range(config.n_iterations):
            t_pass = time.perf_counter()
            run_pass(state, config, pass_index)
            pass_ms = (time.perf_counter() - t_pass) * 1000.0
            rec = {"pass": pass_index, "wall_ms": pass_ms}
            if previous is not None:
                rec["delta"] = iteration_delta(previous, state.encoded, state.orig_missing)
            previous = state.encoded.copy()
            report.passes.append(rec)
            if config.export_intermediates and out_dir is not None:
                _export_numeric(
                    out_dir / f"encoded_pass_{pass_index}.csv", triple, state.encoded
                )
        report.warnings = [str(w.message) for w in caught]
    result = triple.clean.with_cells(state.clean_cells)
    report.columns = state.column_log
    report.gate = {
        "search_enabled": config.search_enabled,
        "passed": state.gate_ok,
        "n_samples": int(triple.encoded.shape[0]),
        "n_features": int(triple.encoded.shape[1]),
        "n_missing_columns": len(state.plans),
    }
    report.design_source = state.design_source
    report.total_wall_ms = (time.perf_counter() - t_start) * 1000.0
    if out_dir is not None and config.save_result:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "imputed.csv").write_bytes(write_csv(result))
    if out_dir is not None and config.save_plots:
        from .bench import write_density_svgs_for_tables

        write_density_svgs_for_tables(triple.clean, result, triple, out_dir)
    return result, report


def _export_matrix(path: Path, table: Table) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(write_csv(table))


def _export_numeric(path: Path, triple: PreprocessedTriple, matrix: np.ndarray) -> None:
    names = tuple(
        triple.clean.column_names[j] for j in triple.imputable_columns
    )
    cells = tuple(
        tuple(None if np.isnan(v) else float(v) for v in row) for row in matrix
    )
    table = Table(
        row_ids=triple.clean.row_ids,
        column_names=names,
        cells=cells,
        id_name=triple.clean.id_name,
    )
    _export_matrix(path, table)
