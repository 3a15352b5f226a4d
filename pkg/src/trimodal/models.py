"""The five architectures and their assembly.

Variants (CLI/report names in parentheses):

* speech / visual / text — uni-modal contextual LSTM: raw features of one
  modality through a 2-layer cLSTM block.
* early fusion (ef) — concatenated raw features of all three modalities
  through a 2-layer cLSTM block.
* tri-modal attention (mma) — standardization layers, three parallel
  directional attention modules with the skip path, a 1-layer cLSTM block.
* late fusion (lf) — per-utterance predictions of the three trained
  uni-modal networks, concatenated and passed through another cLSTM block.
* hybrid (mman) — predictions of the three uni-modal networks and of the
  attention network fused by a single dense+softmax head.

Composite models (lf, mman) hold trained, frozen sub-networks; only their
own fusion parameters train. Frozen children run off-tape and their
per-conversation outputs are memoized, which is safe exactly because they
are frozen.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import ops
from .attention import (MODALITIES, init_dense, init_directional, init_standardizer,
                        mma_block, mma_output_dim, standardize)
from .recurrent import clstm_forward, init_clstm
from .tape import ParameterStore, ShapeError, Tape, Tensor
from .util import derive_seed

UNIMODAL_KINDS = {"speech": "s", "visual": "v", "text": "t"}
MODEL_KINDS = ("speech", "visual", "text", "ef", "lf", "mma", "mman")


@dataclass
class ModelConfig:
    """Dimensions and flags shared by every architecture."""

    dim_speech: int = 128
    dim_visual: int = 96
    dim_text: int = 64
    dim_embed: int = 32
    dim_query: int = 16
    dim_key: int = 16
    dim_value: int = 16
    hidden_speech: tuple = (32, 32)
    hidden_visual: tuple = (32, 32)
    hidden_text: tuple = (32, 32)
    hidden_early: tuple = (32, 32)
    hidden_attention: tuple = (32,)
    hidden_late: tuple = (32,)
    n_classes: int = 4
    standardize_activation: str = "linear"
    attention_bias: bool = False
    fuse_probabilities: bool = True
    dropout: float = 0.0

    def __post_init__(self):
        for f in ("dim_speech", "dim_visual", "dim_text", "dim_embed",
                  "dim_query", "dim_key", "dim_value"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if self.dim_query != self.dim_key:
            raise ValueError(
                f"dim_query ({self.dim_query}) must equal dim_key ({self.dim_key}): "
                "the attention scores are dot products of queries and keys")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        for f in ("hidden_speech", "hidden_visual", "hidden_text", "hidden_early",
                  "hidden_attention", "hidden_late"):
            sizes = tuple(int(x) for x in getattr(self, f))
            if not sizes or any(x < 1 for x in sizes):
                raise ValueError(f"{f} must list positive layer widths")
            object.__setattr__(self, f, sizes)
        if len(self.hidden_attention) != 1:
            raise ValueError("the attention sub-network uses exactly one LSTM layer")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def input_dim(self, modality: str) -> int:
        return {"s": self.dim_speech, "v": self.dim_visual, "t": self.dim_text}[modality]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kwargs = dict(d)
        for f in fields(cls):
            if f.name in kwargs and isinstance(kwargs[f.name], list):
                kwargs[f.name] = tuple(kwargs[f.name])
        return cls(**kwargs)


def _feature_matrices(conv_or_feats) -> dict[str, np.ndarray]:
    if hasattr(conv_or_feats, "feature_matrices"):
        return conv_or_feats.feature_matrices()
    return conv_or_feats


class Model:
    """Common surface: forward to per-utterance probabilities, named params."""

    kind: str = ""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.store = ParameterStore()
        self.children: dict[str, "Model"] = {}

    # -- parameters ----------------------------------------------------
    def parameters(self):
        """Yield (qualified name, Parameter), children before own store."""
        for key, child in self.children.items():
            for name, p in child.parameters():
                yield f"{key}.{name}", p
        prefix = "fusion." if self.children else ""
        for name, p in self.store.items():
            yield prefix + name, p

    def n_parameters(self) -> int:
        return sum(p.tensor.size for _, p in self.parameters())

    def freeze_children(self) -> None:
        for child in self.children.values():
            for _, p in child.parameters():
                p.frozen = True

    def children_frozen(self) -> bool:
        return all(p.frozen for c in self.children.values() for _, p in c.parameters())

    # -- forward --------------------------------------------------------
    def forward(self, conv_or_feats, tape: Tape | None = None,
                rng: np.random.Generator | None = None, logits: bool = False) -> Tensor:
        raise NotImplementedError


class UnimodalClstm(Model):
    """Raw features of one modality through a 2-layer cLSTM block."""

    def __init__(self, config: ModelConfig, seed: int, kind: str):
        super().__init__(config)
        self.kind = kind
        self.modality = UNIMODAL_KINDS[kind]
        hidden = getattr(config, f"hidden_{kind}")
        rng = np.random.default_rng(seed)
        self.block = init_clstm(self.store, "clstm", config.input_dim(self.modality),
                                hidden, config.n_classes, rng)

    def forward(self, conv_or_feats, tape=None, rng=None, logits=False):
        feats = _feature_matrices(conv_or_feats)
        if self.modality not in feats:
            raise ShapeError(f"conversation is missing modality {self.modality!r}")
        x = Tensor(feats[self.modality])
        return clstm_forward(tape, x, self.block, self.config.dropout, rng,
                             return_logits=logits)


class EarlyFusionClstm(Model):
    """Concatenated raw features through a 2-layer cLSTM block."""

    kind = "ef"

    def __init__(self, config: ModelConfig, seed: int):
        super().__init__(config)
        d_in = config.dim_speech + config.dim_visual + config.dim_text
        rng = np.random.default_rng(seed)
        self.block = init_clstm(self.store, "clstm", d_in, config.hidden_early,
                                config.n_classes, rng)

    def forward(self, conv_or_feats, tape=None, rng=None, logits=False):
        feats = _feature_matrices(conv_or_feats)
        x = Tensor(np.concatenate([feats[m] for m in MODALITIES], axis=1))
        return clstm_forward(tape, x, self.block, self.config.dropout, rng,
                             return_logits=logits)


class AttentionClstm(Model):
    """Standardization, directional tri-modal attention, 1-layer cLSTM."""

    kind = "mma"

    def __init__(self, config: ModelConfig, seed: int):
        super().__init__(config)
        rng = np.random.default_rng(seed)
        dims_in = {m: config.input_dim(m) for m in MODALITIES}
        self.standardizer = init_standardizer(self.store, dims_in, config.dim_embed,
                                              rng, config.standardize_activation)
        self.modules = {
            m: init_directional(self.store, f"attention.{m}", m, config.dim_embed,
                                config.dim_query, config.dim_value, rng,
                                bias=config.attention_bias)
            for m in MODALITIES
        }
        d_in = mma_output_dim(config.dim_embed, config.dim_value)
        self.block = init_clstm(self.store, "clstm", d_in, config.hidden_attention,
                                config.n_classes, rng)

    def forward(self, conv_or_feats, tape=None, rng=None, logits=False):
        feats = _feature_matrices(conv_or_feats)
        s, v, t = (Tensor(feats[m]) for m in MODALITIES)
        triple = standardize(tape, s, v, t, self.standardizer)
        fused = mma_block(tape, triple, self.modules)
        return clstm_forward(tape, fused, self.block, self.config.dropout, rng,
                             return_logits=logits)


class _CompositeModel(Model):
    """Shared machinery: frozen children off-tape, memoized child outputs."""

    child_keys: tuple[str, ...] = ()

    def __init__(self, config: ModelConfig, children: dict[str, Model]):
        super().__init__(config)
        if set(children) != set(self.child_keys):
            raise ValueError(f"{self.kind} needs sub-networks {self.child_keys}")
        self.children = {k: children[k] for k in self.child_keys}
        self.freeze_children()
        self._child_cache: dict[int, tuple[object, np.ndarray]] = {}

    def _child_matrix(self, conv_or_feats) -> np.ndarray:
        """Concatenated per-utterance child outputs, (M, n_children*C)."""
        key = id(conv_or_feats)
        hit = self._child_cache.get(key)
        if hit is not None and hit[0] is conv_or_feats:
            return hit[1]
        want_logits = not self.config.fuse_probabilities
        outs = [self.children[k].forward(conv_or_feats, tape=None, logits=want_logits).data
                for k in self.child_keys]
        mat = np.concatenate(outs, axis=1)
        if self.children_frozen():
            self._child_cache[key] = (conv_or_feats, mat)
        return mat


class LateFusionClstm(_CompositeModel):
    """Uni-modal predictions concatenated into a higher-level cLSTM block."""

    kind = "lf"
    child_keys = ("speech", "visual", "text")

    def __init__(self, config: ModelConfig, children: dict[str, Model]):
        super().__init__(config, children)
        for key in self.child_keys:
            if self.children[key].config.n_classes != config.n_classes:
                raise ShapeError(f"sub-network {key} emits "
                                 f"{self.children[key].config.n_classes} classes, "
                                 f"expected {config.n_classes}")
        rng = np.random.default_rng(derive_seed(0, "lf-fusion"))
        self.block = init_clstm(self.store, "clstm", 3 * config.n_classes,
                                config.hidden_late, config.n_classes, rng)

    def reseed(self, seed: int) -> "LateFusionClstm":
        rng = np.random.default_rng(seed)
        fresh = ParameterStore()
        self.block = init_clstm(fresh, "clstm", 3 * self.config.n_classes,
                                self.config.hidden_late, self.config.n_classes, rng)
        self.store = fresh
        return self

    def forward(self, conv_or_feats, tape=None, rng=None, logits=False):
        x = Tensor(self._child_matrix(conv_or_feats))
        return clstm_forward(tape, x, self.block, self.config.dropout, rng,
                             return_logits=logits)


class HybridNet(_CompositeModel):
    """Four sub-network predictions fused by one dense+softmax head."""

    kind = "mman"
    child_keys = ("speech", "visual", "text", "mma")

    def __init__(self, config: ModelConfig, children: dict[str, Model]):
        super().__init__(config, children)
        rng = np.random.default_rng(derive_seed(0, "mman-fusion"))
        self.head = init_dense(self.store, "head", 4 * config.n_classes,
                               config.n_classes, rng)

    def reseed(self, seed: int) -> "HybridNet":
        rng = np.random.default_rng(seed)
        fresh = ParameterStore()
        self.head = init_dense(fresh, "head", 4 * self.config.n_classes,
                               self.config.n_classes, rng)
        self.store = fresh
        return self

    def forward(self, conv_or_feats, tape=None, rng=None, logits=False):
        x = Tensor(self._child_matrix(conv_or_feats))
        out = ops.affine(tape, x, self.head.weight, self.head.bias)
        if logits:
            return out
        return ops.softmax(tape, out)


def build_model(kind: str, config: ModelConfig, seed: int = 0) -> Model:
    """Construct any variant; composites get fresh, frozen sub-networks.

    Normally composites are assembled from already-trained sub-networks
    (see training.train_fusion_head and the experiment runner); building
    them directly is for loading checkpoints and for tests.
    """
    if kind in UNIMODAL_KINDS:
        return UnimodalClstm(config, seed, kind)
    if kind == "ef":
        return EarlyFusionClstm(config, seed)
    if kind == "mma":
        return AttentionClstm(config, seed)
    if kind == "lf":
        children = {k: build_model(k, config, derive_seed(seed, f"child:{k}"))
                    for k in LateFusionClstm.child_keys}
        return LateFusionClstm(config, children).reseed(derive_seed(seed, "fusion"))
    if kind == "mman":
        children = {k: build_model(k, config, derive_seed(seed, f"child:{k}"))
                    for k in HybridNet.child_keys}
        return HybridNet(config, children).reseed(derive_seed(seed, "fusion"))
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def count_parameters(model: Model) -> int:
    """Exact number of parameter scalars, frozen sub-networks included."""
    return model.n_parameters()


def parameter_breakdown(model: Model) -> dict[str, int]:
    return {name: p.tensor.size for name, p in model.parameters()}
