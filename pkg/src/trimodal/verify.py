"""End-to-end gradient verification across the architectures.

Runs each model at deliberately tiny dimensions so central finite
differences over every unfrozen scalar stay cheap, and reports the worst
relative error against the tape gradients.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .data import Conversation, Utterance
from .gradcheck import grad_check
from .models import MODEL_KINDS, Model, ModelConfig, build_model

TINY_CONFIG = ModelConfig(
    dim_speech=5, dim_visual=4, dim_text=3,
    dim_embed=4, dim_query=3, dim_key=3, dim_value=3,
    hidden_speech=(4, 4), hidden_visual=(4, 4), hidden_text=(4, 4),
    hidden_early=(4, 4), hidden_attention=(4,), hidden_late=(4,),
    n_classes=3,
)


def random_conversation(config: ModelConfig, m_len: int, seed: int,
                        conv_id: str = "conv", speaker: str = "spk") -> Conversation:
    """Features uniform in [-1, 1], labels uniform over the classes."""
    rng = np.random.default_rng(seed)
    utterances = [
        Utterance(rng.uniform(-1, 1, config.dim_speech),
                  rng.uniform(-1, 1, config.dim_visual),
                  rng.uniform(-1, 1, config.dim_text),
                  int(rng.integers(config.n_classes)))
        for _ in range(m_len)
    ]
    return Conversation(conv_id, speaker, utterances, config.n_classes)


def loss_closure(model: Model, conv: Conversation):
    labels = conv.labels()

    def f(tape):
        probs = model.forward(conv, tape)
        return ops.mean_cross_entropy(tape, probs, labels)

    return f


def grad_errors(kinds=MODEL_KINDS, config: ModelConfig = TINY_CONFIG,
                m_len: int = 3, seed: int = 0, step: float = 1e-5) -> dict[str, float]:
    """Worst finite-difference relative error per architecture."""
    conv = random_conversation(config, m_len, seed)
    errors = {}
    for kind in kinds:
        model = build_model(kind, config, seed=seed + 1)
        errors[kind] = grad_check(loss_closure(model, conv),
                                  list(model.parameters()), step=step)
    return errors
