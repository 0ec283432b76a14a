from .network import (
    ForwardCache,
    LayerSpec,
    NetworkSpec,
    backward,
    conv2d,
    dense,
    flatten,
    forward,
    gradient_check,
    init_params,
    iter_arrays,
    mae_loss,
    param_count,
    param_shapes,
)
from .optim import AdamW

__all__ = [
    "AdamW",
    "ForwardCache",
    "LayerSpec",
    "NetworkSpec",
    "backward",
    "conv2d",
    "dense",
    "flatten",
    "forward",
    "gradient_check",
    "init_params",
    "iter_arrays",
    "mae_loss",
    "param_count",
    "param_shapes",
]
