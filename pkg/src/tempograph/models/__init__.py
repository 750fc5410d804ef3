"""Graph forecasting models: a diffusion-convolutional GRU encoder-decoder and a
spatio-temporal convolutional network, on a minimal reverse-mode tape."""

from .autodiff import Tensor, concatenate, glorot_uniform, stack, zero_grads, zeros
from .config import ModelConfig, TrainConfig, TrainReport
from .dcrnn import DCRNN, DcrnnParams, encoder_decoder_forward, scheduled_sampling_prob
from .graph import power_iteration_lambda_max, random_walk_matrices, scaled_laplacian
from .layers import (
    DcgruParams,
    TemporalConvParams,
    cheb_graph_conv,
    dcgru_step,
    diffusion_conv,
    temporal_gated_conv,
)
from .stgcn import STGCN, StgcnParams, stgcn_forward, stgcn_rollout
from .training import (
    Adam,
    Normalizer,
    TrainedModel,
    WindowSet,
    build_model,
    build_windows,
    load_model,
    predict,
    save_model,
    split_windows,
    train_cell_mask,
    train_model,
)

__all__ = [
    "Tensor",
    "concatenate",
    "glorot_uniform",
    "stack",
    "zero_grads",
    "zeros",
    "ModelConfig",
    "TrainConfig",
    "TrainReport",
    "DCRNN",
    "DcrnnParams",
    "encoder_decoder_forward",
    "scheduled_sampling_prob",
    "power_iteration_lambda_max",
    "random_walk_matrices",
    "scaled_laplacian",
    "DcgruParams",
    "TemporalConvParams",
    "cheb_graph_conv",
    "dcgru_step",
    "diffusion_conv",
    "temporal_gated_conv",
    "STGCN",
    "StgcnParams",
    "stgcn_forward",
    "stgcn_rollout",
    "Adam",
    "Normalizer",
    "TrainedModel",
    "WindowSet",
    "build_model",
    "build_windows",
    "load_model",
    "predict",
    "save_model",
    "split_windows",
    "train_cell_mask",
    "train_model",
]
