"""Differentiable building blocks shared by the two forecasting models.

Formulas are reconstructed from the methods the model names cite (diffusion
convolution over random-walk supports; Chebyshev spatial filtering with
gated temporal convolutions); they are not spelled out in the source text.
All functions take and return :class:`~tempograph.models.autodiff.Tensor`
values whose leading axes broadcast, so the same code serves single graphs
(N, f) and batched sequences (B, T, N, f).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .autodiff import Tensor, as_tensor, concatenate, stack


def diffusion_conv(
    X: Tensor, supports: list[np.ndarray], theta: Tensor, K: int
) -> Tensor:
    """Bidirectional diffusion filter: sum over supports of powers up to K.

    ``theta`` stacks the coefficient matrices as ``(1 + len(supports) * K, f, h)``:
    index 0 is the shared k=0 term (the zeroth power is the identity for every
    support), followed by K matrices per support in support order.
    """
    X = as_tensor(X)
    if K < 0:
        raise ValidationError(f"diffusion order K must be >= 0, got {K}")
    expected = 1 + len(supports) * K
    if theta.shape[0] != expected:
        raise ValidationError(
            f"theta has {theta.shape[0]} coefficient matrices, expected {expected}"
        )
    if X.shape[-1] != theta.shape[1]:
        raise ValidationError(f"feature dim {X.shape[-1]} vs theta fan-in {theta.shape[1]}")
    out = X @ theta[0]
    index = 1
    for support in supports:
        S = Tensor(support)
        propagated = X
        for _ in range(K):
            propagated = S @ propagated
            out = out + propagated @ theta[index]
            index += 1
    return out


@dataclass(frozen=True)
class DcgruParams:
    """Gate parameter triplets for one diffusion-convolutional GRU cell."""

    theta_reset: Tensor
    bias_reset: Tensor
    theta_update: Tensor
    bias_update: Tensor
    theta_candidate: Tensor
    bias_candidate: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {
            "theta_reset": self.theta_reset,
            "bias_reset": self.bias_reset,
            "theta_update": self.theta_update,
            "bias_update": self.bias_update,
            "theta_candidate": self.theta_candidate,
            "bias_candidate": self.bias_candidate,
        }


def dcgru_step(
    x_t: Tensor,
    h_prev: Tensor,
    params: DcgruParams,
    supports: list[np.ndarray],
    K: int,
) -> Tensor:
    """One GRU step with every dense transform replaced by diffusion convolution.

    ``h_t = u * h_prev + (1 - u) * c`` with reset gate r, update gate u and
    tanh candidate c computed from ``[x_t, h_prev]`` (candidate uses
    ``[x_t, r * h_prev]``).
    """
    x_t = as_tensor(x_t)
    h_prev = as_tensor(h_prev)
    if x_t.shape[:-1] != h_prev.shape[:-1]:
        raise ValidationError(f"node axes differ: {x_t.shape} vs {h_prev.shape}")
    joined = concatenate([x_t, h_prev], axis=-1)
    r = (diffusion_conv(joined, supports, params.theta_reset, K) + params.bias_reset).sigmoid()
    u = (diffusion_conv(joined, supports, params.theta_update, K) + params.bias_update).sigmoid()
    gated = concatenate([x_t, r * h_prev], axis=-1)
    c = (diffusion_conv(gated, supports, params.theta_candidate, K) + params.bias_candidate).tanh()
    return u * h_prev + (1.0 - u) * c


def cheb_graph_conv(X: Tensor, L_tilde: np.ndarray, theta: Tensor, Ks: int) -> Tensor:
    """Chebyshev spectral filter: sum of T_k(L~) X Theta_k for k < Ks.

    ``theta`` has shape (Ks, f, h); the polynomial recursion is
    ``T_k = 2 L~ T_{k-1} - T_{k-2}`` with T_0 = X and T_1 = L~ X.
    """
    X = as_tensor(X)
    if Ks < 1:
        raise ValidationError(f"Chebyshev order Ks must be >= 1, got {Ks}")
    if theta.shape[0] != Ks:
        raise ValidationError(f"theta has {theta.shape[0]} matrices, expected Ks={Ks}")
    if X.shape[-1] != theta.shape[1]:
        raise ValidationError(f"feature dim {X.shape[-1]} vs theta fan-in {theta.shape[1]}")
    L = Tensor(L_tilde)
    term_prev = X  # T_0 X
    out = term_prev @ theta[0]
    if Ks == 1:
        return out
    term = L @ X  # T_1 X
    out = out + term @ theta[1]
    for k in range(2, Ks):
        term_next = 2.0 * (L @ term) - term_prev
        out = out + term_next @ theta[k]
        term_prev, term = term, term_next
    return out


@dataclass(frozen=True)
class TemporalConvParams:
    """Width-Kt gated temporal convolution: weight (Kt * c_in, 2h), two bias halves."""

    weight: Tensor
    bias_linear: Tensor
    bias_gate: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {
            "weight": self.weight,
            "bias_linear": self.bias_linear,
            "bias_gate": self.bias_gate,
        }


def temporal_gated_conv(X: Tensor, params: TemporalConvParams, Kt: int) -> Tensor:
    """Gated 1-D convolution along time, per node: (P + b1) * sigmoid(Q + b2).

    Input (B, T, N, c) yields (B, T - Kt + 1, N, h); the kernel sees the
    window's steps concatenated oldest-first along the feature axis and
    doubles the channels so half can gate the other half.
    """
    X = as_tensor(X)
    if X.ndim != 4:
        raise ValidationError(f"expected (B, T, N, c) input, got shape {X.shape}")
    B, T, N, c = X.shape
    if Kt < 1:
        raise ValidationError(f"temporal kernel Kt must be >= 1, got {Kt}")
    if T < Kt:
        raise ValidationError(f"time length {T} shorter than kernel {Kt}")
    if params.weight.shape[0] != Kt * c:
        raise ValidationError(
            f"weight fan-in {params.weight.shape[0]} does not match Kt*c = {Kt * c}"
        )
    h = params.weight.shape[1] // 2
    outputs = []
    for t in range(T - Kt + 1):
        window = concatenate([X[:, t + i] for i in range(Kt)], axis=-1)  # (B, N, Kt*c)
        projected = window @ params.weight  # (B, N, 2h)
        linear = projected[..., :h] + params.bias_linear
        gate = projected[..., h:] + params.bias_gate
        outputs.append(linear * gate.sigmoid())
    return stack(outputs, axis=1)
