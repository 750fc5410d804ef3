"""Spatio-temporal convolutional model: gated temporal convs around Chebyshev filters.

Two sandwich blocks (temporal, spatial, temporal) shrink the time axis by
``2 (Kt - 1)`` each; an output stage collapses what remains with a full-width
temporal convolution and a linear head, giving one step ahead. Longer
horizons reuse the single-step head iteratively on the shifted window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .autodiff import Tensor, as_tensor, concatenate, glorot_uniform
from .config import ModelConfig
from .graph import scaled_laplacian
from .layers import TemporalConvParams, cheb_graph_conv, temporal_gated_conv


@dataclass(frozen=True)
class StBlockParams:
    temporal_in: TemporalConvParams
    cheb_theta: Tensor
    temporal_out: TemporalConvParams


@dataclass(frozen=True)
class StgcnParams:
    block1: StBlockParams
    block2: StBlockParams
    temporal_final: TemporalConvParams
    w_head: Tensor
    b_head: Tensor


def stgcn_forward(
    history: Tensor | np.ndarray,
    L_tilde: np.ndarray,
    params: StgcnParams,
    Kt: int,
    Ks: int,
) -> Tensor:
    """Single-step forward: (B, H, N, f) -> (B, 1, N, 1)."""
    X = as_tensor(history)
    if X.ndim != 4:
        raise ValidationError(f"history must be (B, H, N, f), got {X.shape}")
    if X.shape[1] < 4 * (Kt - 1) + 1:
        raise ValidationError(
            f"history length {X.shape[1]} too short for two blocks of kernel {Kt}"
        )
    for block in (params.block1, params.block2):
        X = temporal_gated_conv(X, block.temporal_in, Kt)
        X = cheb_graph_conv(X, L_tilde, block.cheb_theta, Ks).relu()
        X = temporal_gated_conv(X, block.temporal_out, Kt)
    X = temporal_gated_conv(X, params.temporal_final, X.shape[1])  # collapse time to 1
    return X @ params.w_head + params.b_head


def stgcn_rollout(
    history: Tensor | np.ndarray,
    L_tilde: np.ndarray,
    params: StgcnParams,
    Kt: int,
    Ks: int,
    horizon: int,
) -> Tensor:
    """Apply the single-step head iteratively, feeding predictions back in.

    Requires one input feature, because predictions become the next window's
    feature values.
    """
    X = as_tensor(history)
    if X.ndim != 4:
        raise ValidationError(f"history must be (B, H, N, f), got {X.shape}")
    if X.shape[-1] != 1:
        raise ValidationError("iterative rollout needs input_features == 1")
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    window = X
    steps = []
    for _ in range(horizon):
        step = stgcn_forward(window, L_tilde, params, Kt, Ks)  # (B, 1, N, 1)
        steps.append(step)
        window = concatenate([window[:, 1:], step], axis=1)
    return concatenate(steps, axis=1)


class STGCN:
    """Trainable wrapper: builds the scaled Laplacian and owns the parameters."""

    def __init__(self, config: ModelConfig, adjacency: np.ndarray, rng: np.random.Generator):
        if config.kind != "stgcn":
            raise ValidationError(f"config kind {config.kind!r} is not stgcn")
        self.config = config
        self.L_tilde = scaled_laplacian(adjacency)
        h = config.hidden_units
        Kt = config.temporal_kernel
        Ks = config.cheb_order
        f = config.input_features

        def tconv(c_in: int, width: int) -> TemporalConvParams:
            return TemporalConvParams(
                weight=glorot_uniform((width * c_in, 2 * h), rng),
                bias_linear=glorot_uniform((h,), rng),
                bias_gate=glorot_uniform((h,), rng),
            )

        def block(c_in: int) -> StBlockParams:
            return StBlockParams(
                temporal_in=tconv(c_in, Kt),
                cheb_theta=glorot_uniform((Ks, h, h), rng),
                temporal_out=tconv(h, Kt),
            )

        t_remaining = config.history_steps - 4 * (Kt - 1)
        self.params = StgcnParams(
            block1=block(f),
            block2=block(h),
            temporal_final=tconv(h, t_remaining),
            w_head=glorot_uniform((h, 1), rng),
            b_head=glorot_uniform((1,), rng),
        )

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for prefix, block in (("block1", self.params.block1), ("block2", self.params.block2)):
            for name, tensor in block.temporal_in.tensors().items():
                out[f"{prefix}.temporal_in.{name}"] = tensor
            out[f"{prefix}.cheb_theta"] = block.cheb_theta
            for name, tensor in block.temporal_out.tensors().items():
                out[f"{prefix}.temporal_out.{name}"] = tensor
        for name, tensor in self.params.temporal_final.tensors().items():
            out[f"temporal_final.{name}"] = tensor
        out["w_head"] = self.params.w_head
        out["b_head"] = self.params.b_head
        return out

    def forward(
        self,
        history: np.ndarray | Tensor,
        target: np.ndarray | None = None,
        ss_prob: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        # target/ss_prob accepted for interface parity; the rollout never samples
        return stgcn_rollout(
            history,
            self.L_tilde,
            self.params,
            self.config.temporal_kernel,
            self.config.cheb_order,
            self.config.horizon_steps,
        )
