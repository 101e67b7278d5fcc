"""Dense-tensor math with reverse-mode differentiation.

Just enough to train the memory-cell reader end to end: a define-by-run tape,
the activations and reductions the model uses, and ADAM/SGD with global-norm
gradient clipping.  No GPU kernels, no general broadcasting, no second-order
derivatives.
"""

from .ops import (
    NORM_GUARD,
    add,
    as_tensor,
    clone,
    cross_entropy_logits,
    dropout,
    expand_dims,
    gather_rows,
    l2_normalize,
    linear,
    matmul,
    mul,
    prelu,
    reshape,
    scale,
    sigmoid,
    slice_step,
    softmax,
    sum_axis,
)
from .optim import (
    adam_step,
    clip_global_norm,
    global_grad_norm,
    reset_optimizer_state,
    sgd_step,
    zero_gradients,
)
from .tape import Parameter, Tape, Tensor, accumulate, active_tape, backward, record

__all__ = [
    "NORM_GUARD",
    "Parameter",
    "Tape",
    "Tensor",
    "accumulate",
    "active_tape",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "clip_global_norm",
    "clone",
    "cross_entropy_logits",
    "dropout",
    "expand_dims",
    "gather_rows",
    "global_grad_norm",
    "l2_normalize",
    "linear",
    "matmul",
    "mul",
    "prelu",
    "record",
    "reset_optimizer_state",
    "reshape",
    "scale",
    "sigmoid",
    "sgd_step",
    "slice_step",
    "softmax",
    "sum_axis",
    "zero_gradients",
]
