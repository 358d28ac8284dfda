"""Double-precision differentiable primitives with a tape-based reverse mode."""

from .functional import (
    causal_conv1d,
    channel_standardize,
    discretize,
    dropout,
    gelu,
    layer_norm,
    linear,
    mlp,
    relu,
    scan,
    selective_scan,
    silu,
    softplus,
    tanh,
)
from .gradcheck import GradCheckReport, grad_check
from .params import ParamStore
from .tensor import Tape, Tensor, as_tensor, concat, stack

__all__ = [
    "GradCheckReport", "ParamStore", "Tape", "Tensor", "as_tensor", "causal_conv1d",
    "channel_standardize", "concat", "discretize", "dropout", "gelu", "grad_check",
    "layer_norm", "linear", "mlp", "relu", "scan", "selective_scan", "silu", "softplus",
    "stack", "tanh",
]
