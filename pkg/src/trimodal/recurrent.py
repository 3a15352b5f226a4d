"""LSTM cell and the conversation-level contextual LSTM block.

Timesteps are utterances within one conversation, so the block captures
emotional context between consecutive turns. The recurrence is strictly
left-to-right from zero initial states: the prediction for utterance i
never sees utterances after i.

The cell math runs in the kernel backend (compiled extension or NumPy
fallback, see _kernels); on the tape a whole layer's forward is one fused
operation whose backward does full backpropagation through time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import ops
from .attention import DenseParams, init_dense
from .tape import ParameterStore, ShapeError, Tape, Tensor, glorot


@dataclass
class LstmCellParams:
    """Weights of one cell; gate order: input, forget, cell-candidate, output."""

    w_input: Tensor   # (4h, d_in)
    w_hidden: Tensor  # (4h, h)
    bias: Tensor      # (4h,)

    def __post_init__(self):
        h4, d_in = self.w_input.shape
        if h4 % 4 != 0 or self.w_hidden.shape != (h4, h4 // 4) or self.bias.shape != (h4,):
            raise ShapeError(
                f"inconsistent cell shapes: w_input {self.w_input.shape}, "
                f"w_hidden {self.w_hidden.shape}, bias {self.bias.shape}")

    @property
    def hidden_size(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_input.shape[1]


def init_cell(store: ParameterStore, prefix: str, d_in: int, hidden: int,
              rng: np.random.Generator) -> LstmCellParams:
    """Glorot weights; forget-gate bias 1.0, other biases 0."""
    w_input = store.add(f"{prefix}.w_input", glorot(rng, d_in, 4 * hidden, (4 * hidden, d_in)))
    w_hidden = store.add(f"{prefix}.w_hidden", glorot(rng, hidden, 4 * hidden, (4 * hidden, hidden)))
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0
    bias = store.add(f"{prefix}.bias", b)
    return LstmCellParams(w_input, w_hidden, bias)


def lstm_step(tape: Tape | None, x: Tensor, h_prev: Tensor, c_prev: Tensor,
              params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """One cell step on 1-D tensors; returns (h, c)."""
    hidden = params.hidden_size
    if x.shape != (params.input_size,) or h_prev.shape != (hidden,) or c_prev.shape != (hidden,):
        raise ShapeError(
            f"lstm_step: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} vs cell "
            f"(d_in={params.input_size}, h={hidden})")
    h_data, c_data, gi, gf, gg, go, gtc = K.lstm_step_forward(
        x.data, h_prev.data, c_prev.data,
        params.w_input.data, params.w_hidden.data, params.bias.data)
    h, c = Tensor(h_data), Tensor(c_data)
    if tape is not None:
        def backward():
            dh = tape.peek(h)
            dc = tape.peek(c)
            dh = np.zeros(hidden) if dh is None else dh
            dc = np.zeros(hidden) if dc is None else dc
            K.lstm_step_backward(
                dh, dc, x.data, h_prev.data, c_prev.data,
                params.w_input.data, params.w_hidden.data,
                gi, gf, gg, go, gtc,
                tape.grad(x), tape.grad(h_prev), tape.grad(c_prev),
                tape.grad(params.w_input), tape.grad(params.w_hidden),
                tape.grad(params.bias))
        tape.record((x, h_prev, c_prev, params.w_input, params.w_hidden,
                     params.bias, h, c), backward)
    return h, c


def lstm_layer(tape: Tape | None, xs: Tensor, params: LstmCellParams) -> Tensor:
    """Whole-sequence recurrence: (M, d_in) -> (M, h), zero initial states.

    Recorded as a single tape operation; its backward runs BPTT over all
    M steps inside the kernel backend.
    """
    if xs.data.ndim != 2 or xs.shape[1] != params.input_size:
        raise ShapeError(f"lstm_layer: input {xs.shape} vs d_in={params.input_size}")
    if xs.shape[0] < 1:
        raise ShapeError("lstm_layer: empty sequence")
    hs, cs, gi, gf, gg, go, gtc = K.lstm_seq_forward(
        xs.data, params.w_input.data, params.w_hidden.data, params.bias.data)
    out = Tensor(hs)
    if tape is not None:
        def backward():
            dhs = tape.peek(out)
            if dhs is None:
                return
            K.lstm_seq_backward(
                dhs, xs.data, hs, cs, gi, gf, gg, go, gtc,
                params.w_input.data, params.w_hidden.data,
                tape.grad(xs), tape.grad(params.w_input),
                tape.grad(params.w_hidden), tape.grad(params.bias))
        tape.record((xs, params.w_input, params.w_hidden, params.bias, out), backward)
    return out


@dataclass
class ClstmBlock:
    """Stacked LSTM layer(s) plus a dense+softmax head over classes."""

    layers: list[LstmCellParams]
    head: DenseParams

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ShapeError("cLSTM block needs at least one LSTM layer")
        for lower, upper in zip(self.layers, self.layers[1:]):
            if upper.input_size != lower.hidden_size:
                raise ShapeError(
                    f"layer stack mismatch: {lower.hidden_size} -> {upper.input_size}")
        if self.head.d_in != self.layers[-1].hidden_size:
            raise ShapeError(
                f"head expects {self.head.d_in}, last layer emits "
                f"{self.layers[-1].hidden_size}")

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def n_classes(self) -> int:
        return self.head.d_out


def init_clstm(store: ParameterStore, prefix: str, d_in: int, hidden_sizes,
               n_classes: int, rng: np.random.Generator) -> ClstmBlock:
    layers = []
    for li, hidden in enumerate(hidden_sizes):
        layers.append(init_cell(store, f"{prefix}.lstm{li}", d_in, hidden, rng))
        d_in = hidden
    head = init_dense(store, f"{prefix}.head", d_in, n_classes, rng)
    return ClstmBlock(layers, head)


def clstm_forward(tape: Tape | None, sequence, block: ClstmBlock,
                  dropout_rate: float = 0.0,
                  rng: np.random.Generator | None = None,
                  return_logits: bool = False) -> Tensor:
    """Per-utterance class probabilities, one row per utterance.

    `sequence` is an (M, d_in) tensor or a list of 1-D tensors. Dropout,
    when enabled and an rng is supplied (training only), applies to each
    LSTM layer's output.
    """
    if isinstance(sequence, (list, tuple)):
        if len(sequence) == 0:
            raise ShapeError("empty conversation")
        sequence = ops.stack_rows(tape, sequence)
    if sequence.data.ndim != 2 or sequence.shape[0] < 1:
        raise ShapeError("empty conversation")
    h = sequence
    for layer in block.layers:
        h = lstm_layer(tape, h, layer)
        if dropout_rate > 0.0 and rng is not None:
            h = ops.dropout(tape, h, dropout_rate, rng)
    logits = ops.affine(tape, h, block.head.weight, block.head.bias)
    if return_logits:
        return logits
    return ops.softmax(tape, logits)
