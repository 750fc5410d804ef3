"""Forecast metrics, the historical-average baseline, and comparison reports.

MAPE masks entries whose actual value is zero (the percentage is undefined
there) and reports the mean over the remaining entries, in percent. The
report renderer prints two decimals, mirroring the result tables this
package reproduces; the JSON and CSV emissions keep full precision so they
round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DurationMatrix, SensorId
from .errors import NumericalError, ValidationError


def _paired(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y, dtype=np.float64).reshape(-1)
    b = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise ValidationError("metric inputs must be non-empty")
    if a.size != b.size:
        raise ValidationError(f"length mismatch: {a.size} actuals vs {b.size} forecasts")
    return a, b


def mae(y, y_hat) -> float:
    """Mean absolute error."""
    a, b = _paired(y, y_hat)
    return float(np.abs(a - b).mean())


def mape(y, y_hat) -> float:
    """Mean absolute percentage error, in percent, over nonzero actuals."""
    a, b = _paired(y, y_hat)
    nonzero = a != 0
    if not nonzero.any():
        raise NumericalError("all actual values are zero: MAPE undefined")
    a, b = a[nonzero], b[nonzero]
    return float((np.abs(a - b) / np.abs(a)).mean() * 100.0)


def rmse(y, y_hat) -> float:
    """Root mean square error."""
    a, b = _paired(y, y_hat)
    return float(np.sqrt(((a - b) ** 2).mean()))


@dataclass(frozen=True)
class EvalRow:
    model: str
    dataset: str
    mae: float
    mape: float
    rmse: float

    def __post_init__(self) -> None:
        for name in ("mae", "mape", "rmse"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    seed: int | None = None
    config_hash: str | None = None
    timestamp: str | None = None

    def to_json(self) -> str:
        payload = {
            "rows": [
                {
                    "model": r.model,
                    "dataset": r.dataset,
                    "mae": r.mae,
                    "mape": r.mape,
                    "rmse": r.rmse,
                }
                for r in self.rows
            ],
            "metadata": {
                "seed": self.seed,
                "config_hash": self.config_hash,
                "timestamp": self.timestamp,
            },
        }
        return json.dumps(payload, indent=2) + "\n"


def masked_matrix(matrix: DurationMatrix, mask: np.ndarray) -> DurationMatrix:
    """Copy of the matrix with all cells outside ``mask`` blanked out."""
    if mask.shape != matrix.values.shape:
        raise ValidationError(f"mask shape {mask.shape} does not match {matrix.values.shape}")
    values = np.where(mask, matrix.values, np.nan)
    return matrix.with_values(values)


def historical_average_baseline(
    train_matrix: DurationMatrix, sensor: SensorId, minutes_of_day: int
) -> float:
    """Mean of the training values this sensor recorded at this time of day."""
    column = train_matrix.values[
        train_matrix.sensor_index(sensor), :, train_matrix.bucket_index(minutes_of_day)
    ]
    observed = column[~np.isnan(column)]
    if observed.size == 0:
        raise NumericalError(
            f"no training support for sensor {sensor!r} at minute {minutes_of_day}"
        )
    return float(observed.mean())


def evaluate_model(model_or_baseline, bundle, model_config, train_config) -> EvalRow:
    """Pooled test-split MAE/MAPE/RMSE for a trained model or the HA baseline.

    ``model_or_baseline`` is either a :class:`~tempograph.models.training.TrainedModel`
    or the string ``"baseline:ha"``. Windows and the chronological split are
    derived exactly as in training, so scores are comparable.
    """
    from .models.training import build_windows, split_windows, train_cell_mask

    matrix = bundle.matrix
    windows = build_windows(matrix, model_config.history_steps, model_config.horizon_steps)
    train, _, test = split_windows(len(windows), train_config.split)
    x_test = windows.x[test]
    y_test = windows.y[test]
    if x_test.shape[0] == 0:
        raise ValidationError("test split is empty")
    if isinstance(model_or_baseline, str):
        if model_or_baseline != "baseline:ha":
            raise ValidationError(f"unknown baseline {model_or_baseline!r}")
        name = "HA"
        span = model_config.history_steps + model_config.horizon_steps
        train_matrix = masked_matrix(
            matrix, train_cell_mask(matrix, windows, train, span)
        )
        width = matrix.interval_width_minutes
        predictions = np.empty_like(y_test)
        test_days = windows.day[test]
        test_starts = windows.start[test]
        for w in range(x_test.shape[0]):
            for h in range(model_config.horizon_steps):
                bucket = test_starts[w] + model_config.history_steps + h
                for s, sensor in enumerate(matrix.sensors):
                    predictions[w, h, s, 0] = historical_average_baseline(
                        train_matrix, sensor, bucket * width
                    )
    else:
        name = model_or_baseline.model_config.kind
        predictions = np.empty_like(y_test)
        batch = train_config.batch_size
        for lo in range(0, x_test.shape[0], batch):
            predictions[lo : lo + batch] = model_or_baseline.predict_batch(
                x_test[lo : lo + batch]
            )
    return EvalRow(
        model=name,
        dataset=bundle.name,
        mae=mae(y_test, predictions),
        mape=mape(y_test, predictions),
        rmse=rmse(y_test, predictions),
    )


def config_hash(*parts) -> str:
    """Stable short hash of configuration dictionaries."""
    canonical = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ComparisonReport:
    text: str
    json: str
    csv: str


def compare_report(rows: Sequence[EvalRow], metadata: dict | None = None) -> ComparisonReport:
    """Render rows as an aligned text table plus JSON and CSV emissions.

    Columns are MAE, MAPE, RMSE per dataset, datasets in first-seen order;
    the text table prints two decimals, JSON and CSV keep full precision.
    """
    rows = list(rows)
    if not rows:
        raise ValidationError("need at least one result row")
    datasets: list[str] = []
    models: list[str] = []
    for r in rows:
        if r.dataset not in datasets:
            datasets.append(r.dataset)
        if r.model not in models:
            models.append(r.model)
    by_key = {(r.model, r.dataset): r for r in rows}

    header1 = ["model"]
    header2 = [""]
    for ds in datasets:
        header1 += [ds, "", ""]
        header2 += ["MAE", "MAPE", "RMSE"]
    table_rows = [header1, header2]
    for model in models:
        line = [model]
        for ds in datasets:
            row = by_key.get((model, ds))
            if row is None:
                line += ["-", "-", "-"]
            else:
                line += [f"{row.mae:.2f}", f"{row.mape:.2f}", f"{row.rmse:.2f}"]
        table_rows.append(line)
    widths = [max(len(r[i]) for r in table_rows) for i in range(len(header1))]
    lines = []
    for r in table_rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    text = "\n".join(lines) + "\n"

    json_payload = {
        "rows": [
            {"model": r.model, "dataset": r.dataset, "mae": r.mae, "mape": r.mape, "rmse": r.rmse}
            for r in rows
        ]
    }
    if metadata:
        json_payload["metadata"] = metadata
    json_text = json.dumps(json_payload, indent=2) + "\n"

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["model", "dataset", "mae", "mape", "rmse"])
    for r in rows:
        writer.writerow([r.model, r.dataset, repr(r.mae), repr(r.mape), repr(r.rmse)])
    return ComparisonReport(text=text, json=json_text, csv=buffer.getvalue())


def rows_from_json(payload: str) -> tuple[EvalRow, ...]:
    data = json.loads(payload)
    return tuple(
        EvalRow(
            model=r["model"], dataset=r["dataset"], mae=r["mae"], mape=r["mape"], rmse=r["rmse"]
        )
        for r in data["rows"]
    )


def rows_from_csv(payload: str) -> tuple[EvalRow, ...]:
    reader = csv.DictReader(io.StringIO(payload))
    return tuple(
        EvalRow(
            model=r["model"],
            dataset=r["dataset"],
            mae=float(r["mae"]),
            mape=float(r["mape"]),
            rmse=float(r["rmse"]),
        )
        for r in reader
    )
