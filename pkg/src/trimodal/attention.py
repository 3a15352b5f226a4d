"""Modality standardization and directional tri-modal attention.

One directional module holds a query projection for its own modality plus
key and value projections for all three. Per utterance it computes

    q = w_query^T x_query
    K = rows [s W_ks; v W_kv; t W_kt]          (3, d_k)
    V = rows [s W_vs; v W_vv; t W_vt]          (3, d_value)
    weights = softmax(K q / sqrt(d_k))          (3,)
    fused   = weights^T V                       (d_value,)

so the softmax selects which modality answers the query. Three parallel
modules (speech-, visual- and text-query) run side by side and their fused
outputs are concatenated together with the standardized embeddings (the
skip path).

Everything here is batched: matrices carry one utterance per row, and the
three key/value slots become three (M, d) matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .tape import ParameterStore, ShapeError, Tape, Tensor, glorot

MODALITIES = ("s", "v", "t")


@dataclass
class DenseParams:
    """One affine layer, optionally bias-free."""

    weight: Tensor  # (d_in, d_out)
    bias: Tensor | None

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]


def init_dense(store: ParameterStore, prefix: str, d_in: int, d_out: int,
               rng: np.random.Generator, bias: bool = True) -> DenseParams:
    w = store.add(f"{prefix}.weight", glorot(rng, d_in, d_out, (d_in, d_out)))
    b = store.add(f"{prefix}.bias", np.zeros(d_out)) if bias else None
    return DenseParams(w, b)


@dataclass
class StandardizedTriple:
    """Speech/visual/text embeddings brought to a common dimension."""

    s_hat: Tensor
    v_hat: Tensor
    t_hat: Tensor

    def __post_init__(self):
        dims = {m: getattr(self, f"{m}_hat").shape[1] for m in MODALITIES}
        if len(set(dims.values())) != 1:
            raise ShapeError(f"standardized dims differ across modalities: {dims}")

    @property
    def dim(self) -> int:
        return self.s_hat.shape[1]

    def get(self, modality: str) -> Tensor:
        return getattr(self, f"{modality}_hat")


@dataclass
class StandardizerParams:
    """Three independent dense layers mapping raw features to dim_embed."""

    layers: dict[str, DenseParams]
    activation: str = "linear"  # or "tanh"


def init_standardizer(store: ParameterStore, dims_in: dict[str, int], dim_embed: int,
                      rng: np.random.Generator, activation: str = "linear") -> StandardizerParams:
    if activation not in ("linear", "tanh"):
        raise ValueError(f"unknown standardizer activation {activation!r}")
    layers = {m: init_dense(store, f"standardize.{m}", dims_in[m], dim_embed, rng)
              for m in MODALITIES}
    return StandardizerParams(layers, activation)


def standardize(tape: Tape | None, s: Tensor, v: Tensor, t: Tensor,
                params: StandardizerParams) -> StandardizedTriple:
    """Map the three raw feature matrices to a shared embedding dimension."""
    inputs = {"s": s, "v": v, "t": t}
    out = {}
    for m in MODALITIES:
        x, layer = inputs[m], params.layers[m]
        if x.data.ndim != 2 or x.shape[1] != layer.d_in:
            raise ShapeError(
                f"standardize: modality {m!r} has features of dim "
                f"{x.shape[-1] if x.data.ndim else '?'}, expected {layer.d_in}")
        y = ops.affine(tape, x, layer.weight, layer.bias)
        if params.activation == "tanh":
            y = ops.tanh(tape, y)
        out[m] = y
    return StandardizedTriple(out["s"], out["v"], out["t"])


@dataclass
class DirectionalAttentionParams:
    """Projections of one directional module: query + 3 keys + 3 values."""

    query_modality: str
    w_query: Tensor                 # (dim_embed, d_q)
    w_key: dict[str, Tensor]        # modality -> (dim_embed, d_k)
    w_value: dict[str, Tensor]      # modality -> (dim_embed, d_val)
    b_query: Tensor | None = None
    b_key: dict[str, Tensor] | None = None
    b_value: dict[str, Tensor] | None = None

    def __post_init__(self):
        if self.query_modality not in MODALITIES:
            raise ValueError(f"query modality must be one of {MODALITIES}")
        d_q = self.w_query.shape[1]
        d_k = self.w_key["s"].shape[1]
        if d_q != d_k:
            raise ShapeError(
                f"query dim {d_q} != key dim {d_k}; the attention dot product "
                "requires them equal")

    @property
    def d_k(self) -> int:
        return self.w_key["s"].shape[1]

    @property
    def d_value(self) -> int:
        return self.w_value["s"].shape[1]


def init_directional(store: ParameterStore, prefix: str, query_modality: str,
                     dim_embed: int, d_qk: int, d_value: int,
                     rng: np.random.Generator, bias: bool = False) -> DirectionalAttentionParams:
    w_query = store.add(f"{prefix}.query", glorot(rng, dim_embed, d_qk, (dim_embed, d_qk)))
    w_key = {m: store.add(f"{prefix}.key_{m}", glorot(rng, dim_embed, d_qk, (dim_embed, d_qk)))
             for m in MODALITIES}
    w_value = {m: store.add(f"{prefix}.value_{m}", glorot(rng, dim_embed, d_value, (dim_embed, d_value)))
               for m in MODALITIES}
    b_query = b_key = b_value = None
    if bias:
        b_query = store.add(f"{prefix}.query_bias", np.zeros(d_qk))
        b_key = {m: store.add(f"{prefix}.key_{m}_bias", np.zeros(d_qk)) for m in MODALITIES}
        b_value = {m: store.add(f"{prefix}.value_{m}_bias", np.zeros(d_value)) for m in MODALITIES}
    return DirectionalAttentionParams(query_modality, w_query, w_key, w_value,
                                      b_query, b_key, b_value)


@dataclass
class AttentionOutput:
    fused: Tensor    # (M, d_value)
    weights: Tensor  # (M, 3), columns in fixed order S, V, T


def directional_attention(tape: Tape | None, triple: StandardizedTriple,
                          params: DirectionalAttentionParams) -> AttentionOutput:
    """One directional module over a conversation's standardized triple."""
    if triple.dim != params.w_query.shape[0]:
        raise ShapeError(
            f"attention: embeddings have dim {triple.dim}, projections expect "
            f"{params.w_query.shape[0]}")
    q = ops.affine(tape, triple.get(params.query_modality), params.w_query, params.b_query)
    scale = math.sqrt(params.d_k)
    logit_cols = []
    values = []
    for m in MODALITIES:
        k_m = ops.affine(tape, triple.get(m), params.w_key[m],
                         params.b_key[m] if params.b_key else None)
        logit_cols.append(ops.rowdot(tape, q, k_m))
        values.append(ops.affine(tape, triple.get(m), params.w_value[m],
                                 params.b_value[m] if params.b_value else None))
    logits = ops.concat(tape, logit_cols, axis=1)          # (M, 3)
    weights = ops.softmax(tape, logits, scale=scale)
    fused = None
    for j, v_m in enumerate(values):
        contrib = ops.colmul(tape, v_m, ops.col(tape, weights, j))
        fused = contrib if fused is None else ops.add(tape, fused, contrib)
    return AttentionOutput(fused, weights)


def mma_block(tape: Tape | None, triple: StandardizedTriple,
              modules: dict[str, DirectionalAttentionParams]) -> Tensor:
    """Three parallel directional modules plus the skip path.

    Output columns, in this fixed order: fused(speech query), fused(visual
    query), fused(text query), then the standardized s, v, t embeddings.
    """
    if set(modules) != set(MODALITIES):
        raise ShapeError(f"need one module per query modality {MODALITIES}")
    d_values = {m: modules[m].d_value for m in MODALITIES}
    if len(set(d_values.values())) != 1:
        raise ShapeError(f"value dims differ across directional modules: {d_values}")
    fused = [directional_attention(tape, triple, modules[m]).fused for m in MODALITIES]
    skip = [triple.get(m) for m in MODALITIES]
    return ops.concat(tape, fused + skip, axis=1)


def mma_output_dim(dim_embed: int, d_value: int) -> int:
    return 3 * d_value + 3 * dim_embed
