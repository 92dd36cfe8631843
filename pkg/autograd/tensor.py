from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


# Grad mode and the active tape stack are per thread, so read-only inference
# on other threads never records anything.
_state = threading.local()


def _thread_state():
    if not hasattr(_state, "tapes"):
        _state.tapes = []
        _state.grad_enabled = True
    return _state


def is_grad_enabled() -> bool:
    return _thread_state().grad_enabled


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording for the enclosed block on the current thread."""
    state = _thread_state()
    previous = state.grad_enabled
    state.grad_enabled = False
    try:
        yield
    finally:
        state.grad_enabled = previous


def current_tape() -> Optional["Tape"]:
    tapes = _thread_state().tapes
    return tapes[-1] if tapes else None


@dataclass(eq=False)
class TapeRecord:
    name: str
    index: int
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    tape: "Tape"


class Tape:
    """
    Ordered record of differentiable operations.

    Operations are appended as they execute, so the list is already in
    topological order. Use it as a context manager; every operation on a
    requires_grad tensor inside the block is recorded here.

        with Tape() as tape:
            loss = cross_entropy(model_logits, labels)
            tape.backward(loss)
    """

    def __init__(self):
        self._records: List[TapeRecord] = []

    def __enter__(self) -> "Tape":
        _thread_state().tapes.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        tapes = _thread_state().tapes
        if tapes and tapes[-1] is self:
            tapes.pop()

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> Tuple[TapeRecord, ...]:
        return tuple(self._records)

    def record(self, name, inputs, output, backward) -> TapeRecord:
        entry = TapeRecord(name=name, index=len(self._records), inputs=tuple(inputs),
                           output=output, backward=backward, tape=self)
        self._records.append(entry)
        return entry

    def reset(self) -> None:
        """Drop all records. Tensors produced earlier become constants."""
        for entry in self._records:
            entry.output._record = None
        self._records.clear()

    def backward(self, loss: "Tensor") -> None:
        """
        Reverse-mode sweep from a scalar loss.

        Gradients are accumulated into the .grad of every reachable leaf tensor
        that requires grad (a leaf is a tensor not produced on this tape).
        Calling backward twice without zeroing accumulates twice.
        """
        if loss.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        entry = loss._record
        if entry is None or entry.tape is not self:
            raise ValueError("loss was not produced through this tape")

        pending = {id(loss): np.ones_like(loss.data)}
        for record in reversed(self._records[: entry.index + 1]):
            upstream = pending.pop(id(record.output), None)
            if upstream is None:
                continue
            input_grads = record.backward(upstream)
            for tensor, grad in zip(record.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                producer = tensor._record
                if producer is None or producer.tape is not self:
                    tensor._accumulate(grad)
                else:
                    key = id(tensor)
                    pending[key] = pending[key] + grad if key in pending else grad


class Tensor:
    """Dense float64 array with an optional gradient."""

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        array = np.asarray(data, dtype=np.float64)
        if not array.flags.c_contiguous:
            array = np.ascontiguousarray(array)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._record: Optional[TapeRecord] = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._record is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self) -> None:
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._record is None:
            raise ValueError("tensor was not produced through a tape")
        self._record.tape.backward(self)

    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __neg__(self):
        return ops.mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by a constant")
        return ops.mul(self, 1.0 / other)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, index):
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def record_op(name: str, data: np.ndarray, inputs: Sequence[Tensor],
              backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Wrap an op result, recording it on the active tape when a gradient could flow."""
    tape = current_tape()
    track = tape is not None and is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        out._record = tape.record(name, inputs, out, backward)
    return out


from autograd import ops  # noqa: E402
