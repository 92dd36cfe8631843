from autograd.tensor import ShapeError, Tape, Tensor, current_tape, is_grad_enabled, no_grad
from autograd.ops import (
    add,
    cross_entropy,
    dropout,
    embedding,
    gelu,
    layer_norm,
    linear,
    log_softmax,
    matmul,
    mul,
    softmax,
    sub,
)
from autograd.optim import Adam, AdamState, adam_step, clip_grad_norm
from autograd.gradcheck import gradcheck, numerical_gradient


def backward(loss: Tensor) -> None:
    """Populate .grad on every leaf reachable from a scalar loss recorded on a tape."""
    loss.backward()
