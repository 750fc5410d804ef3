import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempograph import DurationMatrix, NumericalError, ValidationError
from tempograph.eval import (
    ComparisonReport,
    EvalReport,
    EvalRow,
    compare_report,
    config_hash,
    evaluate_model,
    historical_average_baseline,
    mae,
    mape,
    masked_matrix,
    rmse,
    rows_from_csv,
    rows_from_json,
)

TABLE_ROWS = (
    EvalRow(model="STGCN", dataset="METR-LA", mae=6.65, mape=28.26, rmse=12.73),
    EvalRow(model="STGCN", dataset="Q-Traffic", mae=5.07, mape=15.21, rmse=6.89),
    EvalRow(model="DCRNN", dataset="METR-LA", mae=3.98, mape=12.31, rmse=7.78),
    EvalRow(model="DCRNN", dataset="Q-Traffic", mae=3.79, mape=9.81, rmse=4.22),
)


class TestMetrics:
    def test_perfect_forecast(self):
        y = [1.0, 2.0, 3.0]
        assert mae(y, y) == 0.0
        assert mape(y, y) == 0.0
        assert rmse(y, y) == 0.0

    def test_mae_hand_value(self):
        assert mae([1.0, 2.0, 3.0], [2.0, 2.0, 5.0]) == pytest.approx(1.0)

    def test_mape_hand_value(self):
        assert mape([100.0, 200.0], [110.0, 180.0]) == pytest.approx(10.0)

    def test_mape_masks_zero_actuals(self):
        assert mape([0.0, 100.0], [5.0, 110.0]) == pytest.approx(10.0)

    def test_mape_all_zero_actuals(self):
        with pytest.raises(NumericalError):
            mape([0.0, 0.0], [1.0, 2.0])

    def test_rmse_hand_value(self):
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.53553, abs=5e-6)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            mae([1.0], [1.0, 2.0])

    def test_empty_inputs(self):
        with pytest.raises(ValidationError):
            rmse([], [])

    @given(
        pairs=st.lists(
            st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=60
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_matches_naive_loops_and_rmse_dominates_mae(self, pairs):
        y = [a for a, _ in pairs]
        y_hat = [b for _, b in pairs]
        naive_mae = sum(abs(a - b) for a, b in pairs) / len(pairs)
        naive_rmse = (sum((a - b) ** 2 for a, b in pairs) / len(pairs)) ** 0.5
        assert mae(y, y_hat) == pytest.approx(naive_mae, rel=1e-9, abs=1e-12)
        assert rmse(y, y_hat) == pytest.approx(naive_rmse, rel=1e-9, abs=1e-12)
        assert rmse(y, y_hat) >= mae(y, y_hat) - 1e-12
        if any(a != 0 for a in y):
            naive_mape = np.mean(
                [abs(a - b) / abs(a) * 100 for a, b in pairs if a != 0]
            )
            assert mape(y, y_hat) == pytest.approx(float(naive_mape), rel=1e-9, abs=1e-12)

    @given(
        pairs=st.lists(
            st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=30
        ),
        shift=st.floats(-1e3, 1e3),
        seed=st.integers(0, 100),
    )
    @settings(max_examples=50, deadline=None)
    def test_permutation_and_translation_invariance(self, pairs, shift, seed):
        y = np.array([a for a, _ in pairs])
        y_hat = np.array([b for _, b in pairs])
        perm = np.random.default_rng(seed).permutation(len(pairs))
        assert mae(y[perm], y_hat[perm]) == pytest.approx(mae(y, y_hat), rel=1e-12)
        assert rmse(y[perm], y_hat[perm]) == pytest.approx(rmse(y, y_hat), rel=1e-12)
        assert mae(y + shift, y_hat + shift) == pytest.approx(mae(y, y_hat), abs=1e-9)
        assert rmse(y + shift, y_hat + shift) == pytest.approx(rmse(y, y_hat), abs=1e-9)


class TestHistoricalAverage:
    def _train_matrix(self, column):
        values = np.full((1, len(column), 288), np.nan)
        for d, v in enumerate(column):
            if v is not None:
                values[0, d, 86] = v
        return DurationMatrix(sensors=("a",), num_days=len(column), values=values)

    def test_column_mean(self):
        m = self._train_matrix([100.0, 110.0, 120.0])
        assert historical_average_baseline(m, "a", 430) == pytest.approx(110.0)

    def test_single_value(self):
        m = self._train_matrix([88.0, None, None])
        assert historical_average_baseline(m, "a", 430) == 88.0

    def test_no_support_names_column(self):
        m = self._train_matrix([None, None])
        with pytest.raises(NumericalError, match="430"):
            historical_average_baseline(m, "a", 430)

    def test_masked_matrix_blanks_outside_mask(self):
        values = np.ones((1, 2, 288))
        m = DurationMatrix(sensors=("a",), num_days=2, values=values)
        mask = np.zeros_like(values, dtype=bool)
        mask[0, 0, :] = True
        masked = masked_matrix(m, mask)
        assert masked.get("a", 0, 0) == 1.0
        assert masked.get("a", 1, 0) is None


class TestEvaluateModel:
    def _bundle(self):
        from tempograph.core import SensorGraph
        from tempograph.ingest import DatasetBundle, SensorRegistry

        rng = np.random.default_rng(2)
        t = np.arange(144)
        values = np.empty((2, 2, 144))
        for d in range(2):
            for i in range(2):
                values[i, d] = 60 + 8 * np.sin(2 * np.pi * t / 36 + i) + rng.normal(0, 0.3, 144)
        ids = ("a", "b")
        matrix = DurationMatrix(sensors=ids, num_days=2, values=values,
                                interval_width_minutes=10)
        graph = SensorGraph(nodes=ids, edges=(), adjacency=np.array([[1.0, 0.5], [0.5, 1.0]]))
        return DatasetBundle(registry=SensorRegistry(ids), graph=graph, matrix=matrix,
                             name="waves")

    def test_perfect_oracle_scores_zero(self):
        from tempograph.models import ModelConfig, TrainConfig, build_windows, split_windows

        bundle = self._bundle()
        mcfg = ModelConfig(kind="dcrnn", num_nodes=2, history_steps=6, horizon_steps=2)
        tcfg = TrainConfig(batch_size=16, epochs=0, seed=0)

        class Oracle:
            model_config = mcfg

            def predict_batch(self, x):
                windows = build_windows(bundle.matrix, 6, 2)
                _, _, test = split_windows(len(windows), tcfg.split)
                # answer with the true targets for whatever slice is requested
                xs = windows.x[test]
                for lo in range(xs.shape[0]):
                    if np.array_equal(xs[lo : lo + x.shape[0]], x):
                        return windows.y[test][lo : lo + x.shape[0]]
                raise AssertionError("unknown window batch")

        row = evaluate_model(Oracle(), bundle, mcfg, tcfg)
        assert (row.mae, row.mape, row.rmse) == (0.0, 0.0, 0.0)

    def test_baseline_row_and_unknown_baseline(self):
        from tempograph.models import ModelConfig, TrainConfig

        bundle = self._bundle()
        mcfg = ModelConfig(kind="dcrnn", num_nodes=2, history_steps=6, horizon_steps=2)
        tcfg = TrainConfig(batch_size=16, epochs=0, seed=0)
        row = evaluate_model("baseline:ha", bundle, mcfg, tcfg)
        assert row.model == "HA"
        assert row.dataset == "waves"
        assert row.mae > 0
        with pytest.raises(ValidationError):
            evaluate_model("baseline:zzz", bundle, mcfg, tcfg)

    def test_trained_model_beats_nothing_but_runs(self):
        from tempograph.models import ModelConfig, TrainConfig, train_model

        bundle = self._bundle()
        mcfg = ModelConfig(kind="stgcn", num_nodes=2, history_steps=9, horizon_steps=2,
                           hidden_units=3)
        tcfg = TrainConfig(batch_size=32, epochs=1, seed=0)
        trained, _ = train_model(bundle, mcfg, tcfg)
        row = evaluate_model(trained, bundle, mcfg, tcfg)
        assert row.model == "stgcn"
        assert np.isfinite(row.mae)


class TestCompareReport:
    def test_table_shape_matches_results_table(self):
        report = compare_report(TABLE_ROWS)
        lines = report.text.splitlines()
        assert "METR-LA" in lines[0] and "Q-Traffic" in lines[0]
        assert lines[1].split() == ["MAE", "MAPE", "RMSE", "MAE", "MAPE", "RMSE"]
        stgcn = lines[2].split()
        dcrnn = lines[3].split()
        assert stgcn == ["STGCN", "6.65", "28.26", "12.73", "5.07", "15.21", "6.89"]
        assert dcrnn == ["DCRNN", "3.98", "12.31", "7.78", "3.79", "9.81", "4.22"]

    def test_single_row_table(self):
        report = compare_report([TABLE_ROWS[0]])
        assert "METR-LA" in report.text
        assert "Q-Traffic" not in report.text

    def test_json_and_csv_roundtrip(self):
        report = compare_report(TABLE_ROWS)
        assert rows_from_json(report.json) == TABLE_ROWS
        assert rows_from_csv(report.csv) == TABLE_ROWS

    def test_two_decimal_rendering(self):
        rows = [EvalRow(model="m", dataset="d", mae=1.005, mape=2.0, rmse=3.14159)]
        report = compare_report(rows)
        assert "3.14" in report.text
        # full precision preserved in the data emissions
        assert rows_from_csv(report.csv)[0].rmse == 3.14159

    def test_empty_rows_rejected(self):
        with pytest.raises(ValidationError):
            compare_report([])

    def test_negative_metric_rejected(self):
        with pytest.raises(ValidationError):
            EvalRow(model="m", dataset="d", mae=-1.0, mape=0.0, rmse=0.0)


class TestEvalReportMetadata:
    def test_json_includes_metadata(self):
        report = EvalReport(rows=TABLE_ROWS[:1], seed=7, config_hash="abc", timestamp="t0")
        text = report.to_json()
        assert '"seed": 7' in text
        assert '"config_hash": "abc"' in text

    def test_config_hash_stable(self):
        a = config_hash({"x": 1}, {"y": [1, 2]})
        b = config_hash({"x": 1}, {"y": [1, 2]})
        c = config_hash({"x": 2}, {"y": [1, 2]})
        assert a == b != c
