from .config import AttentionMode, EncoderConfig
from .network import (
    AdamState,
    Forward,
    NonFiniteError,
    adam_step,
    backward,
    copy_params,
    forward,
    init_params,
    loss_and_grad,
    param_count,
    positional_encoding,
)

__all__ = [
    "AdamState", "AttentionMode", "EncoderConfig", "Forward", "NonFiniteError",
    "adam_step", "backward", "copy_params", "forward", "init_params",
    "loss_and_grad", "param_count", "positional_encoding",
]
