"""Minimal numpy neural-network kernel with hand-written backward passes."""

from .functional import (
    batch_norm_forward,
    dense_backward,
    dense_forward,
    dropout_forward,
    layer_norm_forward,
    scaled_dot_product_attention,
    scaled_dot_product_attention_backward,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_backward,
)
from .gradcheck import check_model_gradients, finite_difference_check, max_relative_error
from .io import load_model_weights, load_tensors, save_model_weights, save_tensors
from .layers import (
    AttentionConfig,
    BatchNorm,
    Dense,
    Dropout,
    FeedForward,
    LayerNorm,
    Module,
    MultiHeadAttention,
    Parameter,
    ReLU,
    count_parameters,
)
from .optim import Adam, AdamW, EarlyStopping, PlateauScheduler

__all__ = [
    "Adam", "AdamW", "AttentionConfig", "BatchNorm", "Dense", "Dropout",
    "EarlyStopping", "FeedForward", "LayerNorm", "Module", "MultiHeadAttention",
    "Parameter", "PlateauScheduler", "ReLU", "batch_norm_forward",
    "check_model_gradients", "count_parameters", "dense_backward", "dense_forward",
    "dropout_forward", "finite_difference_check", "layer_norm_forward",
    "load_model_weights", "load_tensors", "max_relative_error",
    "save_model_weights", "save_tensors", "scaled_dot_product_attention",
    "scaled_dot_product_attention_backward", "softmax", "softmax_cross_entropy",
    "softmax_cross_entropy_backward",
]
