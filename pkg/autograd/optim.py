from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from autograd.tensor import ShapeError, Tensor
from config import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, DEFAULT_LEARNING_RATE


@dataclass
class AdamState:
    """First/second moment estimates for a fixed list of parameters."""
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_parameters(cls, params: Sequence[Tensor], **hyperparameters) -> "AdamState":
        state = cls(**hyperparameters)
        state.first_moments = [np.zeros_like(p.data) for p in params]
        state.second_moments = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place. A None gradient counts as zero."""
    if not (len(params) == len(grads) == len(state.first_moments) == len(state.second_moments)):
        raise ShapeError(
            f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.first_moments)} moment slots"
        )
    for param, grad, m in zip(params, grads, state.first_moments):
        if m.shape != param.shape or (grad is not None and grad.shape != param.shape):
            got = None if grad is None else grad.shape
            raise ShapeError(f"adam_step: param {param.shape}, grad {got}, moment {m.shape}")

    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    step_size = state.learning_rate / bias1

    for param, grad, m, v in zip(params, grads, state.first_moments, state.second_moments):
        g = np.zeros_like(param.data) if grad is None else grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param.data -= step_size * m / (np.sqrt(v / bias2) + state.epsilon)


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most max_norm. Returns the norm before clipping."""
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class Adam:
    """
    Adam over a fixed set of named parameters.

    Only the parameters handed to the constructor are ever updated, which is
    how training freezes everything else.
    """

    def __init__(self, named_params: Mapping[str, Tensor], lr: float = DEFAULT_LEARNING_RATE,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, epsilon: float = ADAM_EPSILON):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self._names = list(named_params)
        self._params = [named_params[name] for name in self._names]
        self.state = AdamState.for_parameters(self._params, learning_rate=lr, beta1=beta1,
                                              beta2=beta2, epsilon=epsilon)
        self.update_counts: Dict[str, int] = {name: 0 for name in self._names}

    @property
    def parameter_names(self) -> List[str]:
        return list(self._names)

    @property
    def parameters(self) -> List[Tensor]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self._params, [p.grad for p in self._params], self.state)
        for name in self._names:
            self.update_counts[name] += 1
