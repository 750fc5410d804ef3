"""Diffusion-convolutional recurrent model: GRU encoder-decoder over graph walks.

The encoder folds the history window into its hidden state; the decoder
unrolls the horizon, feeding back its own predictions except when scheduled
sampling substitutes the ground truth. The sampling probability follows an
inverse-sigmoid decay in the global training iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .autodiff import Tensor, as_tensor, glorot_uniform, stack, zeros
from .config import ModelConfig
from .graph import random_walk_matrices
from .layers import DcgruParams, dcgru_step


@dataclass(frozen=True)
class DcrnnParams:
    encoder: DcgruParams
    decoder: DcgruParams
    w_out: Tensor
    b_out: Tensor


def scheduled_sampling_prob(iteration: int, tau: float) -> float:
    """Probability of feeding ground truth at a given global iteration.

    ``tau / (tau + exp(i / tau))``: starts at ``tau / (tau + 1)`` and decays
    monotonically toward zero while staying strictly positive.
    """
    if tau <= 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    exponent = min(iteration / tau, 700.0)  # keep exp() inside float range
    return tau / (tau + math.exp(exponent))


def encoder_decoder_forward(
    history: Tensor | np.ndarray,
    params: DcrnnParams,
    supports: list[np.ndarray],
    K: int,
    horizon: int,
    ss_prob: float = 0.0,
    target: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Run encoder over (B, H, N, f) history, decode ``horizon`` steps of (B, P, N, 1).

    With ``ss_prob`` > 0 the decoder consumes the ground-truth step with that
    probability (one draw per decoded step), so a target (and rng) is
    required; with 0 it is a pure autoregressive rollout.
    """
    history = as_tensor(history)
    if history.ndim != 4:
        raise ValidationError(f"history must be (B, H, N, f), got {history.shape}")
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    if ss_prob > 0.0 and target is None:
        raise ValidationError("scheduled sampling needs the ground-truth target")
    if ss_prob > 0.0 and rng is None:
        raise ValidationError("scheduled sampling needs an rng for its coin flips")
    B, H, N, _ = history.shape
    hidden = params.w_out.shape[0]
    state = zeros((B, N, hidden))
    for t in range(H):
        state = dcgru_step(history[:, t], state, params.encoder, supports, K)
    outputs = []
    step_input: Tensor = zeros((B, N, 1))  # GO frame
    for p in range(horizon):
        state = dcgru_step(step_input, state, params.decoder, supports, K)
        prediction = state @ params.w_out + params.b_out
        outputs.append(prediction)
        if ss_prob > 0.0 and rng.random() < ss_prob:
            step_input = Tensor(target[:, p])
        else:
            step_input = prediction
    return stack(outputs, axis=1)


class DCRNN:
    """Trainable wrapper: builds supports from the adjacency and owns the parameters."""

    def __init__(self, config: ModelConfig, adjacency: np.ndarray, rng: np.random.Generator):
        if config.kind != "dcrnn":
            raise ValidationError(f"config kind {config.kind!r} is not dcrnn")
        self.config = config
        forward, backward = random_walk_matrices(adjacency)
        self.supports = [forward, backward]
        n_mat = 1 + len(self.supports) * config.diffusion_steps
        h = config.hidden_units
        f = config.input_features

        def cell(in_features: int) -> DcgruParams:
            return DcgruParams(
                theta_reset=glorot_uniform((n_mat, in_features + h, h), rng),
                bias_reset=glorot_uniform((h,), rng),
                theta_update=glorot_uniform((n_mat, in_features + h, h), rng),
                bias_update=glorot_uniform((h,), rng),
                theta_candidate=glorot_uniform((n_mat, in_features + h, h), rng),
                bias_candidate=glorot_uniform((h,), rng),
            )

        self.params = DcrnnParams(
            encoder=cell(f),
            decoder=cell(1),
            w_out=glorot_uniform((h, 1), rng),
            b_out=glorot_uniform((1,), rng),
        )

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for prefix, cell in (("encoder", self.params.encoder), ("decoder", self.params.decoder)):
            for name, tensor in cell.tensors().items():
                out[f"{prefix}.{name}"] = tensor
        out["w_out"] = self.params.w_out
        out["b_out"] = self.params.b_out
        return out

    def forward(
        self,
        history: np.ndarray | Tensor,
        target: np.ndarray | None = None,
        ss_prob: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        return encoder_decoder_forward(
            history,
            self.params,
            self.supports,
            self.config.diffusion_steps,
            self.config.horizon_steps,
            ss_prob=ss_prob,
            target=target,
            rng=rng,
        )
