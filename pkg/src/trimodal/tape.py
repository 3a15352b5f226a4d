"""Dense float64 tensors, the reverse-mode tape, and named parameter storage.

The tape is a Wengert list: every differentiable operation appends one
backward closure while the forward pass runs, so the forward execution
order is a topological order of the graph and replaying the closures in
reverse visits it in exact reverse topological order. Gradients live in
the tape, keyed by tensor identity, and are zeroed at the start of every
backward pass.
"""

from __future__ import annotations

import hashlib

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NumericalError(ArithmeticError):
    """A value that must be finite came out NaN or infinite."""


class Tensor:
    """A dense, C-contiguous float64 array. Thin box; identity matters.

    The same Tensor object must be passed to every operation that should
    share its gradient accumulator (parameters are created once and reused
    across training steps).
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            # ascontiguousarray would promote 0-d scalars to shape (1,)
            arr = np.ascontiguousarray(arr)
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Record of one forward pass, replayable backward."""

    def __init__(self):
        self._backward_ops = []
        self._grads: dict[int, np.ndarray] = {}
        # keep recorded tensors alive so id()-keyed accumulators stay unique
        self._live: list[Tensor] = []

    def record(self, tensors, backward_fn) -> None:
        """Register a backward closure for an op over `tensors`."""
        self._live.extend(tensors)
        self._backward_ops.append(backward_fn)

    def grad(self, t: Tensor) -> np.ndarray:
        """Gradient accumulator for `t`, zero-allocated on first access."""
        g = self._grads.get(id(t))
        if g is None:
            g = np.zeros_like(t.data)
            self._grads[id(t)] = g
        return g

    def peek(self, t: Tensor) -> np.ndarray | None:
        """Accumulator for `t` if one was touched during backward, else None."""
        return self._grads.get(id(t))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) for every tensor on the tape."""
        if loss.data.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if not np.isfinite(loss.data):
            raise NumericalError("loss is not finite")
        self._grads.clear()
        self.grad(loss)[...] = 1.0
        for fn in reversed(self._backward_ops):
            fn()

    def __len__(self) -> int:
        return len(self._backward_ops)


class Parameter:
    """A trainable tensor with its gradient slot and freeze flag."""

    __slots__ = ("tensor", "grad", "frozen")

    def __init__(self, tensor: Tensor, frozen: bool = False):
        self.tensor = tensor
        self.grad = np.zeros_like(tensor.data)
        self.frozen = frozen


class ParameterStore:
    """Named parameters; names unique, parameter and gradient shapes equal."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, data, frozen: bool = False) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(Tensor(data), frozen=frozen)
        self._params[name] = p
        return p.tensor

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def pull_grads(self, tape: Tape) -> None:
        """Accumulate tape gradients into the unfrozen parameters' slots."""
        for p in self._params.values():
            if p.frozen:
                continue
            g = tape.peek(p.tensor)
            if g is not None:
                p.grad += g

    def freeze_all(self) -> None:
        for p in self._params.values():
            p.frozen = True

    def n_scalars(self) -> int:
        return sum(p.tensor.size for p in self._params.values())

    def state_hash(self) -> str:
        """SHA-256 over names, shapes and little-endian parameter bytes."""
        h = hashlib.sha256()
        for name in sorted(self._params):
            p = self._params[name]
            h.update(name.encode())
            h.update(repr(p.tensor.shape).encode())
            h.update(np.ascontiguousarray(p.tensor.data, dtype="<f8").tobytes())
        return h.hexdigest()


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    """Uniform init in +-sqrt(6/(fan_in+fan_out)) from a seeded generator."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
