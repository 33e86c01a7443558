"""Command-line interface: impute, bench, and inspect subcommands.

Exit codes: 0 success, 1 validation error (bad flag, bad range, unreadable
input), 2 runtime error. Option precedence is flag > config file > default.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .bench import run_benchmark, write_density_csv, write_density_svg, write_report_csv
from .engine import ImputeConfig, impute_table
from .preprocess import (
    ColumnMean,
    Knn,
    MixType,
    classify_columns,
    normalize_missing_tokens,
)
from .table import parse_csv, write_csv

OUTPUT_DIR_ENV = "TABFILL_OUTPUT_DIR"

_STRATEGY_NAMES = ("columnmean", "knn", "mixtype")

# config-file keys and the flags that override them share these names
_CONFIG_KEYS = {
    "impute_zeros": bool,
    "pre_imputation": str,
    "knn_k": int,
    "ensemble_size": int,
    "mf_nan_replace": bool,
    "use_full_transform": bool,
    "search_enabled": bool,
    "search_trials": int,
    "n_iterations": int,
    "export_intermediates": bool,
    "save_result": bool,
    "save_plots": bool,
    "seed": int,
}


class UsageError(Exception):
    """Invalid command line or configuration; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{message}\n{self.format_usage()}")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config_pairs(path: str | Path) -> dict:
    """Parse a flat `key = value` file with # comments into typed values."""
    values: dict = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        kind = _CONFIG_KEYS[key]
        try:
            if kind is bool:
                values[key] = _parse_bool(value)
            elif kind is int:
                values[key] = int(value)
            else:
                values[key] = _validated_strategy_name(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return values


def _validated_strategy_name(value: str) -> str:
    low = value.strip().lower()
    if low not in _STRATEGY_NAMES:
        raise ValueError(
            f"pre_imputation must be one of {', '.join(_STRATEGY_NAMES)} (got {value!r})"
        )
    return low


def _build_config(values: dict) -> ImputeConfig:
    strategy_name = values.pop("pre_imputation", "mixtype")
    k = values.pop("knn_k", 5)
    if strategy_name == "columnmean":
        strategy = ColumnMean()
    elif strategy_name == "knn":
        strategy = Knn(k=k)
    else:
        strategy = MixType(k=k)
    config = ImputeConfig(pre_imputation=strategy, **values)
    config.validate()
    return config


def load_config_file(path: str | Path) -> ImputeConfig:
    """Load and validate a config file; absent keys take the defaults."""
    return _build_config(read_config_pairs(path))


def _config_from_args(args: argparse.Namespace) -> ImputeConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_pairs(args.config))
    for key in _CONFIG_KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
    return _build_config(values)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("input", help="input CSV file (first column = sample IDs)")
    parser.add_argument("--output-dir", help="where result files go (default: input directory)")
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--impute-zeros", dest="impute_zeros", action="store_const",
                        const=True, help="treat numeric zeros as missing")
    parser.add_argument("--pre-imputation", dest="pre_imputation",
                        choices=_STRATEGY_NAMES, help="initial dense fill strategy")
    parser.add_argument("--knn-k", dest="knn_k", type=int,
                        help="neighbour count for knn/mixtype pre-imputation")
    parser.add_argument("--ensemble-size", dest="ensemble_size", type=int,
                        help="models averaged per column, 3..9")
    parser.add_argument("--mf-nan-replace", dest="mf_nan_replace", action="store_const",
                        const=True, help="replace only missing design entries from factorization")
    parser.add_argument("--full-transform", dest="use_full_transform", action="store_const",
                        const=True, help="use the fully reconstructed design matrix")
    parser.add_argument("--search", dest="search_enabled", action="store_const",
                        const=True, help="enable hyperparameter search (subject to gating)")
    parser.add_argument("--search-trials", dest="search_trials", type=int,
                        help="search trial count, 5..50")
    parser.add_argument("--iterations", dest="n_iterations", type=int,
                        help="imputation passes, 1..9")
    parser.add_argument("--export-intermediates", dest="export_intermediates",
                        action="store_const", const=True,
                        help="write clean/encoded/preimputed/design CSVs")
    parser.add_argument("--save-plots", dest="save_plots", action="store_const",
                        const=True, help="write density SVG plots")
    parser.add_argument("--seed", dest="seed", type=int, help="random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tabfill", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tabfill {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_impute = sub.add_parser("impute", help="impute a CSV file")
    _add_config_flags(p_impute)

    p_bench = sub.add_parser("bench", help="mask/impute/score benchmark")
    _add_config_flags(p_bench)
    p_bench.add_argument("--fractions", default="0.1,0.2,0.3,0.4",
                         help="comma-separated masking fractions in (0,1)")
    p_bench.add_argument("--methods", default="engine,mean",
                         help="comma-separated subset of engine,mean,knn")
    p_bench.add_argument("--scope", choices=("all", "continuous", "categorical"),
                         default="all", help="which column kinds to mask")

    p_inspect = sub.add_parser("inspect", help="print per-column profiles")
    p_inspect.add_argument("input", help="input CSV file")
    return parser


def _read_table(path_text: str):
    path = Path(path_text)
    if not path.is_file():
        raise UsageError(f"input file not readable: {path}")
    try:
        return parse_csv(path.read_bytes())
    except ValueError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None


def _resolve_output_dir(args: argparse.Namespace, input_path: Path) -> Path:
    if getattr(args, "output_dir", None):
        return Path(args.output_dir)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return input_path.parent


def _cmd_impute(args: argparse.Namespace) -> int:
    table = _read_table(args.input)
    config = _config_from_args(args)
    input_path = Path(args.input)
    out_dir = _resolve_output_dir(args, input_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    result, report = impute_table(table, config, output_dir=out_dir)
    out_csv = out_dir / f"{input_path.stem}_imputed.csv"
    out_csv.write_bytes(write_csv(result))
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"wrote {out_csv}")
    print(f"wrote {out_dir / 'report.json'}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    table = _read_table(args.input)
    config = _config_from_args(args)
    try:
        fractions = [float(tok) for tok in args.fractions.split(",") if tok]
    except ValueError:
        raise UsageError(f"bad --fractions value: {args.fractions!r}") from None
    methods = [tok.strip() for tok in args.methods.split(",") if tok.strip()]
    for f in fractions:
        if not 0 < f < 1:
            raise UsageError(f"--fractions entries must be in (0, 1), got {f}")
    for m in methods:
        if m not in ("engine", "mean", "knn"):
            raise UsageError(f"--methods entries must be engine|mean|knn, got {m!r}")
    input_path = Path(args.input)
    out_dir = _resolve_output_dir(args, input_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    knn_k = args.knn_k if args.knn_k is not None else 5
    report = run_benchmark(
        table, fractions, methods, config, seed=config.seed, scope=args.scope, knn_k=knn_k
    )
    write_report_csv(report, out_dir / "bench_report.csv")
    (out_dir / "bench_report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    write_density_csv(report, out_dir / "density_curves.csv")
    if config.save_plots:
        for idx, curve in enumerate(report.densities):
            safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in curve.column)
            write_density_svg(curve, out_dir / f"density_{idx:03d}_{safe}.svg")
    print(f"wrote {out_dir / 'bench_report.csv'}")
    if report.failures:
        print(f"{len(report.failures)} benchmark cell(s) failed; see bench_report.json")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    table = _read_table(args.input)
    classified, profiles = classify_columns(normalize_missing_tokens(table))
    print(f"{table.n_rows} rows, {table.n_cols} columns (id column: {table.id_name})")
    for name, profile in zip(classified.column_names, profiles):
        extra = f", {profile.n_categories} categories" if profile.categories else ""
        print(
            f"  {name}: {profile.kind.value}, {profile.n_missing} missing{extra}"
        )
    return 0


def run_cli(argv: list[str]) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "impute":
            return _cmd_impute(args)
        if args.command == "bench":
            return _cmd_bench(args)
        return _cmd_inspect(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help/--version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
