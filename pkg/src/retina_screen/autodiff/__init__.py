from .gradcheck import finite_diff_check
from .tensor import (
    Tape,
    Tensor,
    add,
    add_channel_bias,
    add_row_bias,
    avg_pool2d,
    batch_norm,
    clip,
    concat_channels,
    conv2d,
    dropout,
    exp,
    log_softmax,
    matmul,
    mean,
    mul,
    mul_channelwise,
    reduce_sum,
    relu,
    reshape,
    scale,
    softmax,
    sub,
    zero_grads,
)

__all__ = [
    "Tape",
    "Tensor",
    "add",
    "add_channel_bias",
    "add_row_bias",
    "avg_pool2d",
    "batch_norm",
    "clip",
    "concat_channels",
    "conv2d",
    "dropout",
    "exp",
    "finite_diff_check",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "mul_channelwise",
    "reduce_sum",
    "relu",
    "reshape",
    "scale",
    "softmax",
    "sub",
    "zero_grads",
]
