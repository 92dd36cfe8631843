from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from autograd.tensor import Tape, Tensor, no_grad


@dataclass
class GradcheckResult:
    analytic: List[np.ndarray]
    numeric: List[np.ndarray]
    max_relative_error: float

    def passed(self, rtol: float = 1e-4) -> bool:
        return self.max_relative_error <= rtol


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a|| + ||b||, tiny): scale-free and safe near zero."""
    denom = max(float(np.linalg.norm(a) + np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom


def numerical_gradient(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> List[np.ndarray]:
    """Central differences of a scalar-valued fn with respect to each input."""
    grads = []
    with no_grad():
        for tensor in inputs:
            grad = np.zeros_like(tensor.data)
            flat = tensor.data.reshape(-1)
            flat_grad = grad.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + h
                plus = fn(*inputs).item()
                flat[i] = original - h
                minus = fn(*inputs).item()
                flat[i] = original
                flat_grad[i] = (plus - minus) / (2.0 * h)
            grads.append(grad)
    return grads


def analytic_gradient(fn: Callable[..., Tensor], inputs: Sequence[Tensor]) -> List[np.ndarray]:
    for tensor in inputs:
        tensor.requires_grad = True
        tensor.zero_grad()
    with Tape() as tape:
        loss = fn(*inputs)
        tape.backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> GradcheckResult:
    """Compare tape gradients against central finite differences."""
    analytic = analytic_gradient(fn, inputs)
    numeric = numerical_gradient(fn, inputs, h=h)
    worst = max((relative_error(a, n) for a, n in zip(analytic, numeric)), default=0.0)
    return GradcheckResult(analytic=analytic, numeric=numeric, max_relative_error=worst)
