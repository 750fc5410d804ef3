"""Model and training configuration records."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..errors import ValidationError


@dataclass(frozen=True)
class ModelConfig:
    kind: str  # "stgcn" | "dcrnn"
    num_nodes: int
    input_features: int = 1
    history_steps: int = 12
    horizon_steps: int = 3
    hidden_units: int = 16
    diffusion_steps: int = 2  # K, dcrnn
    cheb_order: int = 3  # Ks, stgcn
    temporal_kernel: int = 3  # Kt, stgcn

    def __post_init__(self) -> None:
        if self.kind not in ("stgcn", "dcrnn"):
            raise ValidationError(f"unknown model kind {self.kind!r}")
        for name in (
            "num_nodes",
            "input_features",
            "history_steps",
            "horizon_steps",
            "hidden_units",
            "cheb_order",
            "temporal_kernel",
        ):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.diffusion_steps < 0:
            raise ValidationError("diffusion_steps must be >= 0")
        if self.kind == "stgcn" and self.history_steps < 4 * (self.temporal_kernel - 1) + 1:
            raise ValidationError(
                f"history {self.history_steps} too short for two temporal blocks "
                f"of kernel {self.temporal_kernel}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 50
    epochs: int = 50
    learning_rate: float = 0.01
    seed: int = 1
    scheduled_sampling_tau: float = 2000.0
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    clip_norm: float = 5.0
    patience: int = 10

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.scheduled_sampling_tau <= 0:
            raise ValidationError("scheduled_sampling_tau must be positive")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {self.split}")
        if any(f < 0 for f in self.split):
            raise ValidationError("split fractions must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


@dataclass
class TrainReport:
    """Loss history and final held-out metrics for one training run."""

    train_loss: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)
    test_mae: float = float("nan")
    test_mape: float = float("nan")
    test_rmse: float = float("nan")
    wall_clock_seconds: float = 0.0
    epochs_run: int = 0
    best_epoch: int = -1
    model_config: dict = field(default_factory=dict)
    train_config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_mae": self.val_mae,
            "test_mae": self.test_mae,
            "test_mape": self.test_mape,
            "test_rmse": self.test_rmse,
            "wall_clock_seconds": self.wall_clock_seconds,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "model_config": self.model_config,
            "train_config": self.train_config,
        }
