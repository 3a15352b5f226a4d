"""Differentiable operations over Tensors.

Every operation computes its forward value eagerly and, when a tape is
given, records one closure that accumulates gradients for its inputs from
the gradient of its output. Passing tape=None runs inference only.

Only the shapes the models need are supported: matrices (rows = utterances
of one conversation), vectors, and scalars. No general broadcasting.
"""

from __future__ import annotations

import math

import numpy as np

from .tape import NumericalError, ShapeError, Tape, Tensor

PROB_FLOOR = 1e-12


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def matmul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; backward dA = dC @ B^T, dB = A^T @ dC."""
    A, B = a.data, b.data
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {A.shape} and {B.shape}")
    out = Tensor(A @ B)
    if tape is not None:
        def backward():
            g = tape.grad(out)
            tape.grad(a)[...] += g @ B.T
            tape.grad(b)[...] += A.T @ g
        tape.record((a, b, out), backward)
    return out


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
    out = Tensor(a.data + b.data)
    if tape is not None:
        def backward():
            g = tape.grad(out)
            tape.grad(a)[...] += g
            tape.grad(b)[...] += g
        tape.record((a, b, out), backward)
    return out


def add_row(tape: Tape | None, a: Tensor, bias: Tensor) -> Tensor:
    """Add a length-n bias vector to every row of an (m, n) matrix."""
    if a.data.ndim != 2 or bias.data.shape != (a.data.shape[1],):
        raise ShapeError(f"add_row: matrix {a.data.shape} vs bias {bias.data.shape}")
    out = Tensor(a.data + bias.data)
    if tape is not None:
        def backward():
            g = tape.grad(out)
            tape.grad(a)[...] += g
            tape.grad(bias)[...] += g.sum(axis=0)
        tape.record((a, bias, out), backward)
    return out


def mul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} differ")
    out = Tensor(a.data * b.data)
    if tape is not None:
        def backward():
            g = tape.grad(out)
            tape.grad(a)[...] += g * b.data
            tape.grad(b)[...] += g * a.data
        tape.record((a, b, out), backward)
    return out


def colmul(tape: Tape | None, a: Tensor, col: Tensor) -> Tensor:
    """Scale each row of an (m, n) matrix by the matching (m, 1) entry."""
    if a.data.ndim != 2 or col.data.shape != (a.data.shape[0], 1):
        raise ShapeError(f"colmul: matrix {a.data.shape} vs column {col.data.shape}")
    out = Tensor(a.data * col.data)
    if tape is not None:
        def backward():
            g = tape.grad(out)
            tape.grad(a)[...] += g * col.data
            tape.grad(col)[...] += (g * a.data).sum(axis=1, keepdims=True)
        tape.record((a, col, out), backward)
    return out


def rowdot(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Per-row dot product of two (m, n) matrices -> (m, 1)."""
    if a.data.shape != b.data.shape or a.data.ndim != 2:
        raise ShapeError(f"rowdot: shapes {a.data.shape} and {b.data.shape}")
    out = Tensor((a.data * b.data).sum(axis=1, keepdims=True))
    if tape is not None:
        def backward():
            g = tape.grad(out)
            tape.grad(a)[...] += g * b.data
            tape.grad(b)[...] += g * a.data
        tape.record((a, b, out), backward)
    return out


def col(tape: Tape | None, a: Tensor, j: int) -> Tensor:
    """Column j of a matrix as an (m, 1) tensor."""
    if a.data.ndim != 2 or not (0 <= j < a.data.shape[1]):
        raise ShapeError(f"col: index {j} outside matrix {a.data.shape}")
    out = Tensor(a.data[:, j : j + 1].copy())
    if tape is not None:
        def backward():
            tape.grad(a)[:, j : j + 1] += tape.grad(out)
        tape.record((a, out), backward)
    return out


def row(tape: Tape | None, a: Tensor, i: int) -> Tensor:
    """Row i of a matrix as a 1-D tensor."""
    if a.data.ndim != 2 or not (0 <= i < a.data.shape[0]):
        raise ShapeError(f"row: index {i} outside matrix {a.data.shape}")
    out = Tensor(a.data[i].copy())
    if tape is not None:
        def backward():
            tape.grad(a)[i] += tape.grad(out)
        tape.record((a, out), backward)
    return out


def concat(tape: Tape | None, parts, axis: int = 0) -> Tensor:
    """Concatenate tensors along `axis`; backward splits the gradient."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat: no tensors given")
    out = Tensor(np.concatenate([t.data for t in parts], axis=axis))
    if tape is not None:
        sizes = [t.data.shape[axis] for t in parts]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        ndim = out.data.ndim
        def backward():
            g = tape.grad(out)
            for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                sl = [slice(None)] * ndim
                sl[axis] = slice(lo, hi)
                tape.grad(t)[...] += g[tuple(sl)]
        tape.record((*parts, out), backward)
    return out


def stack_rows(tape: Tape | None, rows_) -> Tensor:
    """Stack 1-D tensors of equal length into a matrix."""
    rows_ = list(rows_)
    if not rows_ or any(t.data.ndim != 1 for t in rows_):
        raise ShapeError("stack_rows: needs a nonempty list of 1-D tensors")
    out = Tensor(np.stack([t.data for t in rows_], axis=0))
    if tape is not None:
        def backward():
            g = tape.grad(out)
            for i, t in enumerate(rows_):
                tape.grad(t)[...] += g[i]
        tape.record((*rows_, out), backward)
    return out


def total(tape: Tape | None, x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    out = Tensor(x.data.sum())
    if tape is not None:
        def backward():
            tape.grad(x)[...] += tape.grad(out)
        tape.record((x, out), backward)
    return out


def sigmoid(tape: Tape | None, x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    out = Tensor(y)
    if tape is not None:
        def backward():
            tape.grad(x)[...] += tape.grad(out) * y * (1.0 - y)
        tape.record((x, out), backward)
    return out


def tanh(tape: Tape | None, x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y)
    if tape is not None:
        def backward():
            tape.grad(x)[...] += tape.grad(out) * (1.0 - y * y)
        tape.record((x, out), backward)
    return out


def softmax(tape: Tape | None, x: Tensor, scale: float = 1.0) -> Tensor:
    """softmax(x / scale) along the last axis, overflow-safe.

    `scale` carries the sqrt(d_k) temperature of scaled dot-product
    attention; scale=1 is the plain softmax.
    """
    if x.data.size == 0:
        raise ShapeError("softmax: empty input")
    if not scale > 0:
        raise ValueError(f"softmax: scale must be positive, got {scale}")
    z = x.data / scale
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)
    if tape is not None:
        def backward():
            g = tape.grad(out)
            inner = (g * y).sum(axis=-1, keepdims=True)
            tape.grad(x)[...] += (g - inner) * y / scale
        tape.record((x, out), backward)
    return out


def dropout(tape: Tape | None, x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * mask)
    if tape is not None:
        def backward():
            tape.grad(x)[...] += tape.grad(out) * mask
        tape.record((x, out), backward)
    return out


def cross_entropy(tape: Tape | None, probs: Tensor, label: int) -> Tensor:
    """-log(probs[label]) on one probability vector, floored at 1e-12."""
    p = probs.data
    if p.ndim != 1:
        raise ShapeError(f"cross_entropy: expected a vector, got shape {p.shape}")
    label = int(label)
    if not 0 <= label < p.shape[0]:
        raise ValueError(f"cross_entropy: label {label} outside [0, {p.shape[0]})")
    out = Tensor(-math.log(max(p[label], PROB_FLOOR)))
    if tape is not None:
        def backward():
            if p[label] > PROB_FLOOR:
                tape.grad(probs)[label] += -float(tape.grad(out)) / p[label]
        tape.record((probs, out), backward)
    return out


def mean_cross_entropy(tape: Tape | None, probs: Tensor, labels) -> Tensor:
    """Mean of -log(probs[i, labels[i]]) over the rows of an (m, C) matrix."""
    p = probs.data
    labels = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or labels.shape != (p.shape[0],):
        raise ShapeError(f"mean_cross_entropy: probs {p.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= p.shape[1]):
        bad = int(labels[(labels < 0) | (labels >= p.shape[1])][0])
        raise ValueError(f"mean_cross_entropy: label {bad} outside [0, {p.shape[1]})")
    m = p.shape[0]
    picked = p[np.arange(m), labels]
    clamped = np.maximum(picked, PROB_FLOOR)
    out = Tensor(-np.log(clamped).mean())
    if tape is not None:
        def backward():
            g = float(tape.grad(out))
            live = picked > PROB_FLOOR
            gp = tape.grad(probs)
            rows_idx = np.arange(m)[live]
            gp[rows_idx, labels[live]] += -g / (m * picked[live])
        tape.record((probs, out), backward)
    return out


def affine(tape: Tape | None, x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    """x @ weight (+ bias per row when given)."""
    y = matmul(tape, x, weight)
    if bias is not None:
        y = add_row(tape, y, bias)
    return y


def check_finite(t: Tensor, what: str) -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NumericalError(f"{what}: non-finite values")
    return t
