"""Loss, optimizers, and the two-stage training protocol.

Sub-networks train independently on per-conversation gradient steps (BPTT
over all utterances of one conversation). The hybrid network then trains
only its fusion head: every sub-network tensor is frozen and verified
bitwise identical afterwards.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .models import Model
from .tape import ParameterStore, Tape

OPTIMIZER_KINDS = ("sgd", "adam")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the offending epoch."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss in epoch {epoch}")
        self.epoch = epoch


class FrozenParameterViolation(RuntimeError):
    """A tensor that must stay fixed changed during fusion training."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 40
    optimizer: str = "adam"   # "adam" (adaptive moments) or "sgd" (plain gradient)
    clip_norm: float | None = 5.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ValueError(f"optimizer must be one of {OPTIMIZER_KINDS}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")


@dataclass
class TrainReport:
    """Per-epoch mean loss and train accuracy plus run metadata."""

    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    snapshot_id: str = ""
    wall_seconds: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.losses)

    def to_jsonl(self, path) -> None:
        """One record per epoch: epoch, mean_loss, train_acc."""
        with open(path, "w", encoding="utf-8") as fh:
            for e, (loss, acc) in enumerate(zip(self.losses, self.accuracies), start=1):
                fh.write(json.dumps({"epoch": e, "mean_loss": loss, "train_acc": acc})
                         + "\n")


class Sgd:
    """Plain gradient descent; frozen parameters are skipped entirely."""

    def __init__(self, store: ParameterStore, cfg: TrainConfig):
        self.store = store
        self.lr = cfg.lr

    def step(self) -> None:
        for _, p in self.store.items():
            if p.frozen:
                continue
            p.tensor.data -= self.lr * p.grad


class Adam:
    """Adaptive moment estimation; frozen parameters are skipped entirely."""

    def __init__(self, store: ParameterStore, cfg: TrainConfig):
        self.store = store
        self.cfg = cfg
        self.t = 0
        self._m = {name: np.zeros_like(p.tensor.data) for name, p in store.items()}
        self._v = {name: np.zeros_like(p.tensor.data) for name, p in store.items()}

    def step(self) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for name, p in self.store.items():
            if p.frozen:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * p.grad
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * p.grad * p.grad
            p.tensor.data -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def make_optimizer(store: ParameterStore, cfg: TrainConfig):
    return Adam(store, cfg) if cfg.optimizer == "adam" else Sgd(store, cfg)


def clip_global_norm(store: ParameterStore, max_norm: float) -> float:
    """Scale all unfrozen gradients so their global L2 norm <= max_norm."""
    total = 0.0
    for _, p in store.items():
        if not p.frozen:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = max_norm / norm
        for _, p in store.items():
            if not p.frozen:
                p.grad *= factor
    return norm


def train_subnetwork(model: Model, conversations, cfg: TrainConfig) -> TrainReport:
    """Minimize mean per-utterance cross-entropy over whole conversations.

    Deterministic given (seed, config, dataset): the conversation order of
    each epoch is a permutation drawn from one seeded generator, and every
    arithmetic step is fixed-order.
    """
    conversations = list(conversations)
    if not conversations:
        raise ValueError("empty training set")
    start = time.perf_counter()
    opt = make_optimizer(model.store, cfg)
    rng = np.random.default_rng(cfg.seed)
    dropout_rng = np.random.default_rng(cfg.seed + 1) if model.config.dropout > 0 else None
    report = TrainReport()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(conversations))
        loss_sum = 0.0
        n_correct = 0
        n_total = 0
        for j in order:
            conv = conversations[j]
            labels = conv.labels()
            tape = Tape()
            probs = model.forward(conv, tape, rng=dropout_rng)
            loss = ops.mean_cross_entropy(tape, probs, labels)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(epoch)
            model.store.zero_grads()
            tape.backward(loss)
            model.store.pull_grads(tape)
            if cfg.clip_norm is not None:
                clip_global_norm(model.store, cfg.clip_norm)
            opt.step()
            loss_sum += float(loss.data)
            n_correct += int((probs.data.argmax(axis=1) == labels).sum())
            n_total += len(labels)
        report.losses.append(loss_sum / len(conversations))
        report.accuracies.append(n_correct / n_total)
    report.wall_seconds = time.perf_counter() - start
    report.snapshot_id = model.store.state_hash()
    return report


def _frozen_state_hash(model: Model) -> str:
    stores = ParameterStore()
    for name, p in model.parameters():
        if p.frozen:
            stores.add(name, p.tensor.data)
    return stores.state_hash()


def train_fusion_head(model: Model, conversations, cfg: TrainConfig) -> TrainReport:
    """Train only the fusion parameters of a composite model.

    The sub-networks' weights are fixed: this verifies bitwise equality of
    every frozen tensor before vs after and aborts on any change.
    """
    if not model.children:
        raise ValueError(f"model kind {model.kind!r} has no sub-networks to freeze")
    model.freeze_children()
    before = _frozen_state_hash(model)
    report = train_subnetwork(model, conversations, cfg)
    after = _frozen_state_hash(model)
    if before != after:
        raise FrozenParameterViolation(
            "a frozen sub-network tensor changed during fusion training")
    return report
