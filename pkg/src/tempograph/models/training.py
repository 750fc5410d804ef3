"""Windowing, normalization, the optimizer and the training loop.

Windows of (history, horizon) steps slide inside each day separately - the
collection days are independent, so no window crosses midnight. The split
into train/validation/test is chronological over the window list, and both
the z-score statistics and the historical-average baseline are computed only
from cells that training windows touch.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import DurationMatrix
from ..errors import NumericalError, ValidationError
from ..ingest import DatasetBundle
from .autodiff import Tensor, zero_grads
from .config import ModelConfig, TrainConfig, TrainReport
from .dcrnn import DCRNN, scheduled_sampling_prob
from .stgcn import STGCN

MODEL_MANIFEST = "model.json"
MODEL_PARAMS = "params.bin"


@dataclass(frozen=True)
class WindowSet:
    """Sliding windows over a complete matrix, ordered by (day, start bucket)."""

    x: np.ndarray  # (num, H, N, 1)
    y: np.ndarray  # (num, P, N, 1)
    day: np.ndarray  # (num,)
    start: np.ndarray  # (num,) first bucket index of the history span

    def __len__(self) -> int:
        return self.x.shape[0]


def build_windows(matrix: DurationMatrix, history_steps: int, horizon_steps: int) -> WindowSet:
    values = matrix.values
    if np.isnan(values).any():
        raise ValidationError("matrix has missing cells; run gap filling first")
    num_sensors, num_days, buckets = values.shape
    span = history_steps + horizon_steps
    if buckets < span:
        raise ValidationError(f"day length {buckets} shorter than window span {span}")
    xs, ys, days, starts = [], [], [], []
    for d in range(num_days):
        sequence = values[:, d, :].T  # (buckets, sensors)
        for t in range(buckets - span + 1):
            xs.append(sequence[t : t + history_steps])
            ys.append(sequence[t + history_steps : t + span])
            days.append(d)
            starts.append(t)
    if not xs:
        raise ValidationError("no windows could be built")
    return WindowSet(
        x=np.stack(xs)[..., None],
        y=np.stack(ys)[..., None],
        day=np.asarray(days),
        start=np.asarray(starts),
    )


def split_windows(count: int, split: tuple[float, float, float]) -> tuple[slice, slice, slice]:
    """Chronological contiguous split of the window list."""
    n_train = int(count * split[0])
    n_val = int(count * split[1])
    return (
        slice(0, n_train),
        slice(n_train, n_train + n_val),
        slice(n_train + n_val, count),
    )


def train_cell_mask(
    matrix: DurationMatrix, windows: WindowSet, train: slice, span: int
) -> np.ndarray:
    """Boolean (sensors, days, buckets) mask of cells any training window touches."""
    mask = np.zeros(matrix.values.shape, dtype=bool)
    for d, t in zip(windows.day[train], windows.start[train]):
        mask[:, d, t : t + span] = True
    return mask


@dataclass(frozen=True)
class Normalizer:
    mean: float
    std: float

    @staticmethod
    def fit(values: np.ndarray) -> "Normalizer":
        if values.size == 0:
            raise ValidationError("cannot fit normalization on zero cells")
        std = float(values.std())
        return Normalizer(mean=float(values.mean()), std=std if std > 0 else 1.0)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean


class Adam:
    """Adaptive moment optimizer with global-norm gradient clipping."""

    def __init__(
        self,
        params: dict[str, Tensor],
        learning_rate: float = 0.01,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: float = 5.0,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.clip_norm = clip_norm
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        if not grads:
            return
        total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        scale = self.clip_norm / total if total > self.clip_norm else 1.0
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for key, grad in grads.items():
            g = grad * scale
            self._m[key] = self.beta1 * self._m[key] + (1 - self.beta1) * g
            self._v[key] = self.beta2 * self._v[key] + (1 - self.beta2) * g * g
            m_hat = self._m[key] / correct1
            v_hat = self._v[key] / correct2
            self.params[key].data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainedModel:
    """A trained network plus everything needed to use or reload it."""

    model: DCRNN | STGCN
    normalizer: Normalizer
    model_config: ModelConfig
    train_config: TrainConfig
    adjacency: np.ndarray

    def predict_batch(self, history: np.ndarray) -> np.ndarray:
        """(B, H, N, 1) original units -> (B, P, N, 1) original units."""
        z = self.normalizer.transform(np.asarray(history, dtype=np.float64))
        out = self.model.forward(z).data
        return self.normalizer.inverse(out)


def build_model(config: ModelConfig, adjacency: np.ndarray, seed: int) -> DCRNN | STGCN:
    rng = np.random.default_rng(seed)
    if config.kind == "dcrnn":
        return DCRNN(config, adjacency, rng)
    return STGCN(config, adjacency, rng)


def _pooled_metrics(actual: np.ndarray, predicted: np.ndarray) -> tuple[float, float, float]:
    from ..eval import mae, mape, rmse

    a = actual.reshape(-1)
    p = predicted.reshape(-1)
    mape_value = float("nan")
    if np.any(a != 0):
        mape_value = mape(a, p)
    return mae(a, p), mape_value, rmse(a, p)


def _evaluate_split(
    trained: TrainedModel, windows: WindowSet, which: slice, batch_size: int
) -> tuple[float, float, float]:
    xs = windows.x[which]
    ys = windows.y[which]
    if xs.shape[0] == 0:
        raise ValidationError("empty evaluation split")
    predictions = np.empty_like(ys)
    for lo in range(0, xs.shape[0], batch_size):
        predictions[lo : lo + batch_size] = trained.predict_batch(xs[lo : lo + batch_size])
    return _pooled_metrics(ys, predictions)


def train_model(
    bundle: DatasetBundle, model_config: ModelConfig, train_config: TrainConfig
) -> tuple[TrainedModel, TrainReport]:
    """Mini-batch Adam training with early stopping on validation MAE.

    The bundle's matrix must be complete. Returns the best-validation
    parameter snapshot and a report with per-epoch losses and pooled test
    metrics in original units.
    """
    t_begin = time.perf_counter()
    matrix = bundle.matrix
    if model_config.num_nodes != len(matrix.sensors):
        raise ValidationError(
            f"config expects {model_config.num_nodes} nodes, matrix has {len(matrix.sensors)}"
        )
    windows = build_windows(matrix, model_config.history_steps, model_config.horizon_steps)
    train, val, test = split_windows(len(windows), train_config.split)
    if windows.x[train].shape[0] == 0 or windows.x[test].shape[0] == 0:
        raise ValidationError("train or test split is empty; dataset too small")
    span = model_config.history_steps + model_config.horizon_steps
    mask = train_cell_mask(matrix, windows, train, span)
    normalizer = Normalizer.fit(matrix.values[mask])

    model = build_model(model_config, bundle.graph.adjacency, train_config.seed)
    trained = TrainedModel(
        model=model,
        normalizer=normalizer,
        model_config=model_config,
        train_config=train_config,
        adjacency=np.array(bundle.graph.adjacency),
    )
    params = model.parameters()
    optimizer = Adam(
        params, learning_rate=train_config.learning_rate, clip_norm=train_config.clip_norm
    )
    rng = np.random.default_rng(train_config.seed + 1)

    report = TrainReport(
        model_config=model_config.to_dict(), train_config=train_config.to_dict()
    )
    x_train = normalizer.transform(windows.x[train])
    y_train = normalizer.transform(windows.y[train])
    has_val = windows.x[val].shape[0] > 0
    best_val = float("inf")
    best_state = {k: p.data.copy() for k, p in params.items()}
    best_epoch = -1
    patience = train_config.patience
    iteration = 0
    for epoch in range(train_config.epochs):
        order = rng.permutation(x_train.shape[0])
        epoch_losses = []
        for lo in range(0, order.size, train_config.batch_size):
            batch = order[lo : lo + train_config.batch_size]
            x = x_train[batch]
            y = y_train[batch]
            if model_config.kind == "dcrnn":
                ss = scheduled_sampling_prob(iteration, train_config.scheduled_sampling_tau)
                prediction = model.forward(x, target=y, ss_prob=ss, rng=rng)
            else:
                prediction = model.forward(x)
            loss = (prediction - Tensor(y)).abs().mean()
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {lo // train_config.batch_size} "
                    f"(learning rate {train_config.learning_rate})"
                )
            zero_grads(params.values())
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss_value)
            iteration += 1
        report.train_loss.append(float(np.mean(epoch_losses)))
        if has_val:
            val_mae, _, _ = _evaluate_split(trained, windows, val, train_config.batch_size)
        else:
            val_mae = report.train_loss[-1] * normalizer.std
        report.val_mae.append(val_mae)
        report.epochs_run = epoch + 1
        if val_mae < best_val - 1e-12:
            best_val = val_mae
            best_state = {k: p.data.copy() for k, p in params.items()}
            best_epoch = epoch
            patience = train_config.patience
        else:
            patience -= 1
            if patience <= 0:
                break
    for key, p in params.items():
        p.data = best_state[key].copy()
    report.best_epoch = best_epoch
    report.test_mae, report.test_mape, report.test_rmse = _evaluate_split(
        trained, windows, test, train_config.batch_size
    )
    report.wall_clock_seconds = time.perf_counter() - t_begin
    return trained, report


def predict(trained: TrainedModel, history: np.ndarray) -> np.ndarray:
    """Forecast horizon steps from one (H, N) history window, original units."""
    history = np.asarray(history, dtype=np.float64)
    H = trained.model_config.history_steps
    N = trained.model_config.num_nodes
    if history.shape != (H, N):
        raise ValidationError(f"history window must be {(H, N)}, got {history.shape}")
    out = trained.predict_batch(history[None, :, :, None])
    return out[0, :, :, 0]


def save_model(trained: TrainedModel, out_dir: str | Path) -> Path:
    """Checkpoint: JSON manifest + flat little-endian float64 parameter blob."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = trained.model.parameters()
    order = [{"name": k, "shape": list(v.shape)} for k, v in params.items()]
    manifest = {
        "model_config": trained.model_config.to_dict(),
        "train_config": trained.train_config.to_dict(),
        "normalizer": {"mean": trained.normalizer.mean, "std": trained.normalizer.std},
        "seed": trained.train_config.seed,
        "adjacency": trained.adjacency.tolist(),
        "parameter_order": order,
        "dtype": "<f8",
    }
    (out / MODEL_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    blob = b"".join(p.data.astype("<f8").tobytes() for p in params.values())
    (out / MODEL_PARAMS).write_bytes(blob)
    return out / MODEL_MANIFEST


def load_model(model_dir: str | Path) -> TrainedModel:
    model_dir = Path(model_dir)
    manifest = json.loads((model_dir / MODEL_MANIFEST).read_text(encoding="utf-8"))
    model_config = ModelConfig(**manifest["model_config"])
    tc = dict(manifest["train_config"])
    tc["split"] = tuple(tc["split"])
    train_config = TrainConfig(**tc)
    adjacency = np.asarray(manifest["adjacency"], dtype=np.float64)
    model = build_model(model_config, adjacency, manifest["seed"])
    params = model.parameters()
    declared = [(entry["name"], tuple(entry["shape"])) for entry in manifest["parameter_order"]]
    if declared != [(k, v.shape) for k, v in params.items()]:
        raise ValidationError("checkpoint parameter order does not match this model")
    blob = (model_dir / MODEL_PARAMS).read_bytes()
    offset = 0
    for name, shape in declared:
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        chunk = np.frombuffer(blob[offset : offset + size], dtype="<f8").reshape(shape)
        params[name].data = chunk.astype(np.float64).copy()
        offset += size
    if offset != len(blob):
        raise ValidationError(f"parameter blob has {len(blob) - offset} unexpected trailing bytes")
    normalizer = Normalizer(
        mean=manifest["normalizer"]["mean"], std=manifest["normalizer"]["std"]
    )
    return TrainedModel(
        model=model,
        normalizer=normalizer,
        model_config=model_config,
        train_config=train_config,
        adjacency=adjacency,
    )
