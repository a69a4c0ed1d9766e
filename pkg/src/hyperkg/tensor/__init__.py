"""Numeric substrate: tensors with reverse-mode autodiff, fused graph kernels,
AdamW and checkpoint I/O."""
from .autograd import (
    Tape,
    Tensor,
    as_tensor,
    backward,
    current_tape,
    default_dtype,
    fresh_tape,
    no_grad,
    precision,
    set_default_dtype,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .memory import AllocationTracker, track_allocations
from .nn import MLP, LayerNorm, Linear, Module, glorot, parameter
from .ops import (
    SegmentPlan,
    add,
    bias_add,
    clamp,
    concat,
    elementwise,
    gather_rows,
    layernorm,
    log,
    matmul,
    mean_all,
    mul,
    relu,
    reshape,
    segment_sum,
    sigmoid,
    softmax,
    sub,
    sum_all,
    sum_last,
    take_along_last,
)
from .optim import AdamW, AdamWState, adamw_step

__all__ = [name for name in dir() if not name.startswith("_")]
