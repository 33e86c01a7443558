import numpy as np
import pytest

import tabfill.engine as engine_mod
from tabfill.engine import (
    ImputeConfig,
    build_state,
    gate_search,
    impute_column,
    impute_table,
    iteration_delta,
    majority_vote,
    member_seed,
    run_pass,
)
from tabfill.preprocess import ColumnMean, MixType, preprocess_table
from tabfill.table import ColumnKind, Table, write_csv


def make_table(columns: dict[str, list]) -> Table:
    names = tuple(columns)
    n = len(next(iter(columns.values())))
    cells = tuple(tuple(columns[name][i] for name in names) for i in range(n))
    return Table(
        row_ids=tuple(f"r{i}" for i in range(n)),
        column_names=names,
        cells=cells,
    )


def low_rank_table(n=60, m=6, missing=0.15, seed=0) -> tuple[Table, np.ndarray]:
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.5, 1.5, (n, 2))
    h = rng.uniform(0.5, 1.5, (2, m))
    x = w @ h
    cols = {
        f"F{j}": [
            None if rng.random() < missing else float(x[i, j]) for i in range(n)
        ]
        for j in range(m)
    }
    return make_table(cols), x


class TestGateSearch:
    def test_sample_count_must_exceed_fifty(self):
        assert gate_search(50, 10, 2) is False
        assert gate_search(51, 12, 2) is True

    def test_ratio_boundary_inclusive(self):
        assert gate_search(400, 100, 5) is True
        assert gate_search(399, 100, 5) is False

    def test_missing_column_cap(self):
        assert gate_search(10000, 50, 101) is False
        assert gate_search(10000, 50, 100) is True

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            gate_search(-1, 10, 2)


class TestIterationDelta:
    def test_identical_matrices(self):
        a = np.ones((3, 3))
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 0] = True
        assert iteration_delta(a, a.copy(), mask) == 0.0

    def test_mean_absolute_change(self):
        a = np.zeros((2, 2))
        b = np.zeros((2, 2))
        b[0, 0] = 2.0
        mask = np.ones((2, 2), dtype=bool)
        assert iteration_delta(a, b, mask) == 0.5

    def test_restricted_to_missing_positions(self):
        a = np.zeros((2, 2))
        b = a.copy()
        b[1, 1] = 99.0  # observed position: ignored
        mask = np.zeros((2, 2), dtype=bool)
        mask[0, 0] = True
        assert iteration_delta(a, b, mask) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            iteration_delta(np.zeros((2, 2)), np.zeros((3, 2)), np.zeros((2, 2), bool))


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs,fragment",
        [
            ({"ensemble_size": 2}, "ensemble_size"),
            ({"ensemble_size": 10}, "[3, 9]"),
            ({"search_trials": 4}, "[5, 50]"),
            ({"search_trials": 51}, "search_trials"),
            ({"n_iterations": 0}, "[1, 9]"),
            ({"n_iterations": 10}, "n_iterations"),
            ({"mf_nan_replace": True, "use_full_transform": True}, "both"),
            ({"seed": "abc"}, "seed"),
            ({"impute_zeros": 1}, "impute_zeros"),
            ({"pre_imputation": "mean"}, "pre_imputation"),
        ],
    )
    def test_ranges_rejected_with_named_parameter(self, kwargs, fragment):
        with pytest.raises(ValueError, match=None) as exc:
            ImputeConfig(**kwargs).validate()
        assert fragment in str(exc.value)

    def test_defaults_valid(self):
        cfg = ImputeConfig()
        cfg.validate()
        assert cfg.ensemble_size == 3
        assert cfg.search_trials == 5
        assert cfg.n_iterations == 1
        assert isinstance(cfg.pre_imputation, MixType)
        assert cfg.seed == 42


class TestMemberSeeds:
    def test_prefix_property(self):
        for k in range(3, 9):
            small = [member_seed(42, 5, i) for i in range(k)]
            big = [member_seed(42, 5, i) for i in range(k + 1)]
            assert big[:k] == small

    def test_distinct_across_columns_and_members(self):
        seeds = {member_seed(0, c, i) for c in range(20) for i in range(9)}
        assert len(seeds) == 20 * 9


class TestMajorityVote:
    def test_plain_majority(self):
        votes = np.array([[0, 1], [0, 1], [1, 1]])
        assert majority_vote(votes, 2).tolist() == [0.0, 1.0]

    def test_tie_goes_to_lowest_code(self):
        votes = np.array([[2], [1], [2], [1]])
        assert majority_vote(votes, 3).tolist() == [1.0]


class TestImputeTable:
    def test_fully_observed_passthrough_trains_nothing(self):
        t = make_table({"a": [1.0, 2.0, 3.0], "b": ["x", "y", "x"]})
        out, report = impute_table(t, ImputeConfig())
        assert out.cells == t.cells
        assert report.columns == []

    def test_output_is_complete(self):
        t, _ = low_rank_table(seed=1)
        out, _ = impute_table(t, ImputeConfig())
        assert all(c is not None for row in out.cells for c in row)

    def test_observed_values_immutable(self):
        t, _ = low_rank_table(seed=2)
        out, _ = impute_table(t, ImputeConfig())
        for i in range(t.n_rows):
            for j in range(t.n_cols):
                if t.cells[i][j] is not None:
                    assert out.cells[i][j] == t.cells[i][j]

    def test_deterministic_given_seed(self):
        t, _ = low_rank_table(seed=3)
        cfg = ImputeConfig(seed=7)
        out1, _ = impute_table(t, cfg)
        out2, _ = impute_table(t, cfg)
        assert write_csv(out1) == write_csv(out2)

    def test_categorical_closure(self):
        rng = np.random.default_rng(4)
        f1 = rng.random(80)
        labels = ["low" if v < 0.5 else "high" for v in f1]
        lab_cells = [None if rng.random() < 0.2 else labels[i] for i in range(80)]
        t = make_table(
            {
                "f1": list(f1.astype(float)),
                "f2": list(rng.random(80).astype(float)),
                "lab": lab_cells,
            }
        )
        out, _ = impute_table(t, ImputeConfig())
        observed_labels = {c for c in lab_cells if c is not None}
        for i in range(80):
            assert out.cells[i][2] in observed_labels

    def test_excluded_column_carried_verbatim(self):
        t = make_table(
            {
                "num": [1.0, None, 3.0, 4.0, 5.0],
                "half": [1.0, "a", 2.0, "b", None],
            }
        )
        out, _ = impute_table(t, ImputeConfig(pre_imputation=ColumnMean()))
        assert [r[1] for r in out.cells] == [1.0, "a", 2.0, "b", None]
        assert out.cells[1][0] is not None

    def test_empty_table_rejected(self):
        t = Table(row_ids=(), column_names=("a",), cells=())
        with pytest.raises(ValueError, match="empty"):
            impute_table(t, ImputeConfig())

    def test_invalid_config_rejected_before_work(self):
        t, _ = low_rank_table()
        with pytest.raises(ValueError, match="ensemble_size"):
            impute_table(t, ImputeConfig(ensemble_size=2))

    def test_report_structure(self):
        t, _ = low_rank_table(seed=5)
        _, report = impute_table(t, ImputeConfig(n_iterations=2))
        assert len(report.passes) == 2
        assert "delta" in report.passes[1]
        assert report.passes[1]["delta"] >= 0.0
        flat = report.to_flat_dict()
        assert "total_wall_ms" in flat
        assert any(k.startswith("column.") for k in flat)
        assert any(k.startswith("pass.1.delta") for k in flat)

    def test_factorized_design_modes(self):
        t, _ = low_rank_table(seed=6)
        out_a, rep_a = impute_table(t, ImputeConfig(mf_nan_replace=True))
        out_b, rep_b = impute_table(t, ImputeConfig(use_full_transform=True))
        assert rep_a.design_source == "nmf" and rep_b.design_source == "nmf"
        assert all(c is not None for row in out_a.cells for c in row)
        assert all(c is not None for row in out_b.cells for c in row)

    def test_export_intermediates(self, tmp_path):
        t, _ = low_rank_table(seed=7)
        cfg = ImputeConfig(export_intermediates=True, n_iterations=2)
        impute_table(t, cfg, output_dir=tmp_path)
        for name in (
            "clean.csv",
            "encoded.csv",
            "preimputed.csv",
            "design.csv",
            "encoded_pass_0.csv",
            "encoded_pass_1.csv",
        ):
            assert (tmp_path / name).exists(), name

    def test_save_result_and_plots(self, tmp_path):
        t, _ = low_rank_table(seed=8)
        cfg = ImputeConfig(save_result=True, save_plots=True)
        impute_table(t, cfg, output_dir=tmp_path)
        assert (tmp_path / "imputed.csv").exists()
        assert list(tmp_path.glob("density_*.svg"))


class TestSequentialUpdates:
    def test_earlier_column_predictions_feed_later_columns(self):
        t, _ = low_rank_table(n=40, m=4, seed=9)
        triple = preprocess_table(t)
        cfg = ImputeConfig()
        state = build_state(triple, cfg)
        assert len(state.plans) >= 2
        first, second = state.plans[0], state.plans[1]
        before = state.design.copy()
        impute_column(first, state, cfg)
        changed = state.design[first.missing_rows, first.encoded_col]
        pre_values = before[first.missing_rows, first.encoded_col]
        assert not np.array_equal(changed, pre_values)
        # the design the next column trains on is the updated mutable state
        design_for_second = np.delete(state.design, second.encoded_col, axis=1)
        col_pos = first.encoded_col - (first.encoded_col > second.encoded_col)
        assert np.array_equal(
            design_for_second[first.missing_rows, col_pos], changed
        )

    def test_second_pass_skips_search(self, monkeypatch):
        rng = np.random.default_rng(10)
        n = 80
        cols = {
            f"F{j}": [
                None if rng.random() < 0.1 else float(rng.random())
                for _ in range(n)
            ]
            for j in range(4)
        }
        t = make_table(cols)
        calls = []
        real_search = engine_mod.search_params

        def counting_search(*args, **kwargs):
            calls.append(1)
            return real_search(*args, **kwargs)

        monkeypatch.setattr(engine_mod, "search_params", counting_search)
        cfg = ImputeConfig(search_enabled=True, search_trials=5, n_iterations=2, seed=0)
        _, report = impute_table(t, cfg)
        assert report.gate["passed"] is True
        n_missing_cols = report.gate["n_missing_columns"]
        assert len(calls) == n_missing_cols  # once per column, not per pass

    def test_zero_planned_columns_noop(self):
        t = make_table({"a": [1.0, 2.0, 3.0]})
        triple = preprocess_table(t)
        cfg = ImputeConfig()
        state = build_state(triple, cfg)
        before = state.encoded.copy()
        run_pass(state, cfg, 0)
        assert np.array_equal(state.encoded, before)
        assert state.plans == []


class TestFallbacks:
    def test_too_few_observed_rows_keeps_preimputed(self):
        # the majority-type rule guarantees >=2 observed rows for planned
        # columns, so exercise the guard through the op directly
        t = make_table(
            {"a": [float(i) for i in range(6)], "b": [float(i * 2) for i in range(6)]}
        )
        triple = preprocess_table(t, strategy=ColumnMean())
        cfg = ImputeConfig()
        state = build_state(triple, cfg)
        state.orig_missing[:, 0] = True
        state.orig_missing[0, 0] = False
        plan = engine_mod.ColumnPlan(
            table_col=0,
            encoded_col=0,
            name="a",
            kind=ColumnKind.CONTINUOUS,
            n_classes=0,
            missing_rows=np.arange(1, 6),
        )
        with pytest.warns(Warning, match="fewer than 2 observed"):
            preds = impute_column(plan, state, cfg)
        assert np.array_equal(preds, triple.preimputed[1:6, 0])

    def test_public_single_observed_cell_falls_back(self):
        t = make_table(
            {
                "a": [5.0, None, None, None],
                "b": [1.0, 2.0, 3.0, 4.0],
            }
        )
        # the engine captures fallback warnings into the report
        out, report = impute_table(t, ImputeConfig(pre_imputation=ColumnMean()))
        assert [r[0] for r in out.cells] == [5.0, 5.0, 5.0, 5.0]
        assert any("fewer than 2 observed" in w for w in report.warnings)

    def test_imputation_warnings_land_in_report(self, monkeypatch):
        import warnings as warnings_mod

        from tabfill.preprocess import ImputationWarning

        real = engine_mod.preprocess_table

        def warning_preprocess(*args, **kwargs):
            warnings_mod.warn("synthetic fallback", ImputationWarning, stacklevel=2)
            return real(*args, **kwargs)

        monkeypatch.setattr(engine_mod, "preprocess_table", warning_preprocess)
        t, _ = low_rank_table(seed=11)
        _, report = impute_table(t, ImputeConfig())
        assert any("synthetic fallback" in w for w in report.warnings)

    def test_single_label_column_filled_with_that_label(self):
        t = make_table(
            {
                "num": [float(i) for i in range(10)],
                "lab": ["only"] * 8 + [None, None],
            }
        )
        out, _ = impute_table(t, ImputeConfig(pre_imputation=ColumnMean()))
        assert out.cells[8][1] == "only"
        assert out.cells[9][1] == "only"
