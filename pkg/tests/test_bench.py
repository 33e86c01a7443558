import math

import numpy as np
import pytest

from tabfill.bench import (
    BenchReport,
    MaskSpec,
    baseline_impute,
    categorical_accuracy,
    gaussian_kde,
    mask_random,
    rmse,
    run_benchmark,
    write_density_csv,
    write_report_csv,
)
from tabfill.engine import ImputeConfig
from tabfill.preprocess import ColumnMean, Knn
from tabfill.table import Table


def make_table(columns: dict[str, list]) -> Table:
    names = tuple(columns)
    n = len(next(iter(columns.values())))
    cells = tuple(tuple(columns[name][i] for name in names) for i in range(n))
    return Table(
        row_ids=tuple(f"r{i}" for i in range(n)),
        column_names=names,
        cells=cells,
    )


def numeric_table(n=20, m=5, seed=0) -> Table:
    rng = np.random.default_rng(seed)
    return make_table(
        {f"F{j}": [float(v) for v in rng.normal(size=n)] for j in range(m)}
    )


class TestMaskRandom:
    def test_exact_count(self):
        t = numeric_table(n=80, m=5)  # 400 eligible cells
        masked, truth = mask_random(t, MaskSpec(fraction=0.25, seed=0))
        assert len(truth) == 100
        assert sum(1 for row in masked.cells for c in row if c is None) == 100

    def test_floor_to_zero_leaves_table_unchanged(self):
        t = numeric_table(n=3, m=2)  # 6 eligible cells, floor(0.1 * 6) = 0
        masked, truth = mask_random(t, MaskSpec(fraction=0.1, seed=0))
        assert truth == []
        assert masked.cells == t.cells

    def test_seeded_determinism(self):
        t = numeric_table(n=30, m=4)
        a = mask_random(t, MaskSpec(fraction=0.2, seed=9))
        b = mask_random(t, MaskSpec(fraction=0.2, seed=9))
        assert a[1] == b[1]
        assert a[0].cells == b[0].cells

    def test_never_masks_already_missing(self):
        cols = {"a": [1.0, None, 3.0, 4.0, 5.0, 6.0], "b": [1.0] * 6}
        t = make_table(cols)
        _, truth = mask_random(t, MaskSpec(fraction=0.5, seed=1))
        assert all(orig is not None for _, _, orig in truth)
        assert (1, 0) not in {(i, j) for i, j, _ in truth}

    def test_column_never_emptied(self):
        t = numeric_table(n=4, m=3)
        masked, truth = mask_random(t, MaskSpec(fraction=0.7, seed=2))
        for j in range(masked.n_cols):
            assert any(c is not None for c in masked.column(j))

    def test_impossible_fraction_rejected(self):
        t = numeric_table(n=2, m=2)
        with pytest.raises(ValueError, match="retain"):
            mask_random(t, MaskSpec(fraction=0.9, seed=0))

    def test_scope_continuous_only(self):
        cols = {
            "num": [float(i) for i in range(10)],
            "cat": ["a", "b"] * 5,
        }
        t = make_table(cols)
        _, truth = mask_random(
            t, MaskSpec(fraction=0.3, seed=0, scope="continuous")
        )
        assert truth and all(j == 0 for _, j, _ in truth)

    def test_scope_categorical_only(self):
        cols = {
            "num": [float(i) for i in range(10)],
            "cat": ["a", "b"] * 5,
        }
        t = make_table(cols)
        _, truth = mask_random(
            t, MaskSpec(fraction=0.3, seed=0, scope="categorical")
        )
        assert truth and all(j == 1 for _, j, _ in truth)

    def test_restore_round_trip(self):
        t = numeric_table(n=25, m=4, seed=3)
        masked, truth = mask_random(t, MaskSpec(fraction=0.3, seed=4))
        cells = [list(row) for row in masked.cells]
        for i, j, orig in truth:
            cells[i][j] = orig
        assert masked.with_cells(cells).cells == t.cells

    def test_fraction_range_enforced(self):
        with pytest.raises(ValueError):
            MaskSpec(fraction=0.0, seed=0)
        with pytest.raises(ValueError):
            MaskSpec(fraction=1.0, seed=0)


class TestMetrics:
    def test_rmse_zero_on_exact_recovery(self):
        t = numeric_table()
        truth = [(0, 0, t.cells[0][0]), (1, 1, t.cells[1][1])]
        assert rmse(t, truth) == 0.0

    def test_rmse_two_point_case(self):
        t = make_table({"a": [1.0, 2.0]})
        truth = [(0, 0, 1.0), (1, 0, 4.0)]  # errors 0 and 2
        assert rmse(t, truth) == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_rmse_matches_sum_loop_oracle(self):
        rng = np.random.default_rng(5)
        t = numeric_table(n=15, m=3, seed=6)
        truth = [
            (i, j, float(rng.normal()))
            for i in range(15)
            for j in range(3)
            if rng.random() < 0.4
        ]
        acc = 0.0
        for i, j, orig in truth:
            acc += (t.cells[i][j] - orig) ** 2
        want = math.sqrt(acc / len(truth))
        assert rmse(t, truth) == pytest.approx(want, abs=1e-12)

    def test_rmse_empty_truth_rejected(self):
        with pytest.raises(ValueError):
            rmse(numeric_table(), [])

    def test_categorical_accuracy_counts(self):
        t = make_table({"c": ["a", "b", "a", "b"]})
        truth = [(0, 0, "a"), (1, 0, "a"), (2, 0, "a"), (3, 0, "b")]
        assert categorical_accuracy(t, truth) == 0.75
        assert categorical_accuracy(t, truth[:1]) == 1.0
        assert categorical_accuracy(t, [(1, 0, "a")]) == 0.0

    def test_categorical_accuracy_empty_rejected(self):
        with pytest.raises(ValueError):
            categorical_accuracy(numeric_table(), [])


class TestBaselines:
    def test_mean_fill(self):
        t = make_table({"a": [1.0, None, 3.0]})
        out = baseline_impute(t, ColumnMean())
        assert out.cells[1][0] == 2.0

    def test_knn_shares_preprocess_oracle(self):
        t = make_table({"a": [1.0, 1.0, 9.0], "b": [1.0, None, 9.0]})
        out = baseline_impute(t, Knn(k=1))
        assert out.cells[1][1] == 1.0

    def test_fully_observed_unchanged(self):
        t = numeric_table(n=10, m=3, seed=7)
        out = baseline_impute(t, ColumnMean())
        assert out.cells == t.cells

    def test_categorical_mode_fill(self):
        t = make_table({"c": ["a", "a", "b", None]})
        out = baseline_impute(t, ColumnMean())
        assert out.cells[3][0] == "a"


class TestDensity:
    def test_kde_integrates_to_one(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=200)
        grid = np.linspace(-6, 6, 500)
        dens = gaussian_kde(values, grid)
        integral = np.trapezoid(dens, grid)
        assert integral == pytest.approx(1.0, abs=0.01)
        assert (dens >= 0).all()

    def test_kde_peaks_near_data(self):
        values = np.full(50, 2.0) + np.random.default_rng(9).normal(scale=0.1, size=50)
        grid = np.linspace(-1, 5, 300)
        dens = gaussian_kde(values, grid)
        assert abs(grid[np.argmax(dens)] - 2.0) < 0.3


class TestRunBenchmark:
    def test_row_counts_and_methods(self):
        t = numeric_table(n=40, m=10, seed=10)
        report = run_benchmark(
            t, [0.1, 0.2, 0.3, 0.4], ["mean", "knn"], ImputeConfig(), seed=0
        )
        assert report.failures == []
        assert len(report.rows) == 8
        assert {r.method for r in report.rows} == {"mean", "knn"}
        for row in report.rows:
            assert row.rmse is not None and np.isfinite(row.rmse)
            assert row.mse == pytest.approx(row.rmse**2)
            assert row.n_masked == int(math.floor(row.fraction * 400))

    def test_single_method_filtering(self):
        t = numeric_table(n=30, m=3, seed=11)
        report = run_benchmark(t, [0.2], ["mean"], ImputeConfig(), seed=0)
        assert [r.method for r in report.rows] == ["mean"]

    def test_determinism_except_timing(self):
        t = numeric_table(n=30, m=3, seed=12)
        cfg = ImputeConfig(seed=5)
        a = run_benchmark(t, [0.2], ["engine", "mean"], cfg, seed=1)
        b = run_benchmark(t, [0.2], ["engine", "mean"], cfg, seed=1)
        for ra, rb in zip(a.rows, b.rows):
            assert ra.rmse == rb.rmse
            assert ra.n_masked == rb.n_masked

    def test_density_curves_emitted(self):
        t = numeric_table(n=30, m=2, seed=13)
        report = run_benchmark(t, [0.2], ["mean"], ImputeConfig(), seed=0)
        assert len(report.densities) == 2
        curve = report.densities[0]
        assert len(curve.abscissa) == 128
        assert np.isfinite(curve.density_original).all()
        assert np.isfinite(curve.density_imputed).all()

    def test_failure_recorded_not_raised(self, monkeypatch):
        import tabfill.bench as bench_mod

        def boom(*args, **kwargs):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(bench_mod, "impute_table", boom)
        t = numeric_table(n=30, m=3, seed=14)
        report = run_benchmark(t, [0.2], ["engine", "mean"], ImputeConfig(), seed=0)
        assert len(report.failures) == 1
        assert report.failures[0]["method"] == "engine"
        assert len(report.rows) == 1  # the mean cell still ran

    def test_bad_inputs_rejected(self):
        t = numeric_table()
        with pytest.raises(ValueError):
            run_benchmark(t, [1.5], ["mean"], ImputeConfig())
        with pytest.raises(ValueError):
            run_benchmark(t, [0.2], ["bogus"], ImputeConfig())


class TestReportWriters:
    def test_csv_layout(self, tmp_path):
        t = numeric_table(n=30, m=3, seed=15)
        report = run_benchmark(t, [0.2], ["mean"], ImputeConfig(), seed=0)
        csv_path = tmp_path / "report.csv"
        write_report_csv(report, csv_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "fraction,method,metric,value"
        metrics = {line.split(",")[2] for line in lines[1:]}
        assert {"rmse", "mse", "wall_time_ms", "n_masked"} <= metrics

    def test_density_csv(self, tmp_path):
        t = numeric_table(n=30, m=2, seed=16)
        report = run_benchmark(t, [0.2], ["mean"], ImputeConfig(), seed=0)
        path = tmp_path / "density.csv"
        write_density_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "method,fraction,column,abscissa,density_original,density_imputed"
        assert len(lines) == 1 + 2 * 128

    def test_json_serializes(self):
        report = BenchReport()
        assert "rows" in report.to_json()
