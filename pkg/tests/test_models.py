"""Architecture assembly: contracts, isolation, oracles, parameter counts."""

import numpy as np
import pytest

from trimodal import ops
from trimodal.checkpoint import CheckpointError, load_model, save_model
from trimodal.models import (HybridNet, LateFusionClstm, Model, ModelConfig,
                             build_model, count_parameters, parameter_breakdown)
from trimodal.recurrent import lstm_step
from trimodal.tape import ParameterStore, Tensor
from trimodal.verify import TINY_CONFIG, random_conversation

CFG = TINY_CONFIG


def lstm_param_count(d_in, hidden):
    return 4 * hidden * d_in + 4 * hidden * hidden + 4 * hidden


def clstm_param_count(d_in, hidden_sizes, n_classes):
    total = 0
    for h in hidden_sizes:
        total += lstm_param_count(d_in, h)
        d_in = h
    return total + d_in * n_classes + n_classes


class TestModelConfig:
    def test_query_key_equality_enforced(self):
        with pytest.raises(ValueError, match="dim_query"):
            ModelConfig(dim_query=3, dim_key=4)

    def test_class_count_minimum(self):
        with pytest.raises(ValueError, match="n_classes"):
            ModelConfig(n_classes=1)

    def test_attention_block_single_layer(self):
        with pytest.raises(ValueError, match="one LSTM layer"):
            ModelConfig(hidden_attention=(8, 8))

    def test_round_trips_through_dict(self):
        cfg = ModelConfig(dim_speech=7, hidden_late=(5, 5))
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestUnimodal:
    def test_modality_isolation_bit_identical(self, rng):
        model = build_model("speech", CFG, seed=3)
        conv = random_conversation(CFG, 4, seed=9)
        base = model.forward(conv).data.copy()
        conv.utterances[2].v[:] += 100.0
        conv._matrices = None  # invalidate the stacked-feature cache
        np.testing.assert_array_equal(model.forward(conv).data, base)
        conv.utterances[1].t[:] -= 50.0
        conv._matrices = None
        np.testing.assert_array_equal(model.forward(conv).data, base)

    def test_outputs_are_distributions(self):
        for kind in ("speech", "visual", "text"):
            model = build_model(kind, CFG, seed=1)
            probs = model.forward(random_conversation(CFG, 5, seed=2)).data
            assert probs.shape == (5, CFG.n_classes)
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_hand_composed_step_dense_softmax(self):
        cfg = ModelConfig(dim_speech=3, dim_visual=2, dim_text=2, dim_embed=2,
                          dim_query=2, dim_key=2, dim_value=2,
                          hidden_speech=(3, 3), n_classes=3)
        model = build_model("speech", cfg, seed=5)
        conv = random_conversation(cfg, 2, seed=6)
        probs = model.forward(conv).data

        xs = conv.feature_matrices()["s"]
        states = [(Tensor(np.zeros(3)), Tensor(np.zeros(3))) for _ in range(2)]
        rows = []
        for t in range(2):
            x = Tensor(xs[t])
            for li, layer in enumerate(model.block.layers):
                h, c = lstm_step(None, x, *states[li], layer)
                states[li] = (h, c)
                x = h
            rows.append(x.data)
        logits = np.stack(rows) @ model.block.head.weight.data + model.block.head.bias.data
        want = np.exp(logits - logits.max(axis=1, keepdims=True))
        want /= want.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(probs, want, atol=1e-12)

    def test_missing_modality_rejected(self):
        model = build_model("text", CFG, seed=0)
        with pytest.raises(Exception, match="missing modality"):
            model.forward({"s": np.zeros((2, CFG.dim_speech)),
                           "v": np.zeros((2, CFG.dim_visual))})


class TestEarlyFusion:
    def test_first_layer_input_dim_is_sum_of_modalities(self):
        model = build_model("ef", CFG, seed=0)
        assert model.block.input_size == CFG.dim_speech + CFG.dim_visual + CFG.dim_text

    def test_utterance_order_matters(self):
        model = build_model("ef", CFG, seed=4)
        conv = random_conversation(CFG, 4, seed=11)
        base = model.forward(conv).data.copy()
        feats = conv.feature_matrices()
        reversed_feats = {m: feats[m][::-1].copy() for m in feats}
        flipped = model.forward(reversed_feats).data
        assert not np.allclose(flipped[::-1], base)

    def test_outputs_are_distributions(self):
        model = build_model("ef", CFG, seed=1)
        probs = model.forward(random_conversation(CFG, 3, seed=2)).data
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


class TestAttentionModel:
    def test_lstm_input_dim_is_attention_plus_skip(self):
        model = build_model("mma", CFG, seed=0)
        assert model.block.input_size == 3 * CFG.dim_value + 3 * CFG.dim_embed

    def test_outputs_are_distributions(self):
        model = build_model("mma", CFG, seed=1)
        probs = model.forward(random_conversation(CFG, 4, seed=3)).data
        assert np.all(probs > 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


class FixedOutputModel(Model):
    """Test stub: emits one constant distribution for every utterance."""

    kind = "stub"

    def __init__(self, config, distribution):
        super().__init__(config)
        self.distribution = np.asarray(distribution, dtype=np.float64)

    def forward(self, conv_or_feats, tape=None, rng=None, logits=False):
        feats = conv_or_feats.feature_matrices() if hasattr(conv_or_feats, "feature_matrices") else conv_or_feats
        m = next(iter(feats.values())).shape[0]
        out = np.tile(self.distribution, (m, 1))
        return Tensor(np.log(out) if logits else out)


class TestLateFusion:
    def test_higher_level_input_dim_is_three_c(self):
        model = build_model("lf", CFG, seed=0)
        assert model.block.input_size == 3 * CFG.n_classes

    def test_outputs_are_distributions(self):
        model = build_model("lf", CFG, seed=2)
        probs = model.forward(random_conversation(CFG, 3, seed=5)).data
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_class_zero_certainty_propagates_through_stub_block(self, monkeypatch):
        # children certain of class 0; higher block mocked to a pass-through
        # that renormalizes the first C columns -> argmax must be class 0
        certain = np.full(CFG.n_classes, 1e-9)
        certain[0] = 1.0 - certain[1:].sum()
        children = {k: FixedOutputModel(CFG, certain)
                    for k in ("speech", "visual", "text")}
        model = LateFusionClstm(CFG, children)

        def passthrough(tape, x, block, dropout_rate=0.0, rng=None,
                        return_logits=False):
            head = x.data[:, :CFG.n_classes]
            return Tensor(head / head.sum(axis=1, keepdims=True))

        monkeypatch.setattr("trimodal.models.clstm_forward", passthrough)
        probs = model.forward(random_conversation(CFG, 4, seed=8)).data
        assert np.all(probs.argmax(axis=1) == 0)

    def test_child_class_count_mismatch_rejected(self):
        other = ModelConfig(dim_speech=CFG.dim_speech, dim_visual=CFG.dim_visual,
                            dim_text=CFG.dim_text, n_classes=4)
        children = {k: build_model(k, other, seed=0)
                    for k in ("speech", "visual", "text")}
        with pytest.raises(Exception, match="classes"):
            LateFusionClstm(CFG, children)


class TestHybrid:
    def test_head_input_dim_is_four_c(self):
        model = build_model("mman", CFG, seed=0)
        assert model.head.d_in == 4 * CFG.n_classes

    def test_average_init_head_preserves_argmax(self, rng):
        p = rng.dirichlet(np.ones(CFG.n_classes))
        children = {k: FixedOutputModel(CFG, p)
                    for k in ("speech", "visual", "text", "mma")}
        model = HybridNet(CFG, children)
        c = CFG.n_classes
        model.head.weight.data[...] = np.vstack([np.eye(c)] * 4) / 4.0
        model.head.bias.data[...] = 0.0
        probs = model.forward(random_conversation(CFG, 3, seed=4)).data
        assert np.all(probs.argmax(axis=1) == p.argmax())

    def test_outputs_are_distributions(self):
        model = build_model("mman", CFG, seed=1)
        probs = model.forward(random_conversation(CFG, 3, seed=2)).data
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_children_frozen_and_cached(self):
        model = build_model("mman", CFG, seed=1)
        assert model.children_frozen()
        conv = random_conversation(CFG, 3, seed=2)
        first = model.forward(conv).data
        assert len(model._child_cache) == 1
        np.testing.assert_array_equal(model.forward(conv).data, first)


class TestParameterCounts:
    def test_bias_free_dense(self, rng):
        from trimodal.attention import init_dense
        store = ParameterStore()
        init_dense(store, "d", 3, 2, rng, bias=False)
        assert store.n_scalars() == 6

    def test_counts_match_architecture_formulas(self):
        cfg = ModelConfig()
        d_sum = cfg.dim_speech + cfg.dim_visual + cfg.dim_text
        expected = {
            "speech": clstm_param_count(cfg.dim_speech, cfg.hidden_speech, cfg.n_classes),
            "visual": clstm_param_count(cfg.dim_visual, cfg.hidden_visual, cfg.n_classes),
            "text": clstm_param_count(cfg.dim_text, cfg.hidden_text, cfg.n_classes),
            "ef": clstm_param_count(d_sum, cfg.hidden_early, cfg.n_classes),
            "mma": (d_sum * cfg.dim_embed + 3 * cfg.dim_embed          # standardize
                    + 3 * (cfg.dim_embed * cfg.dim_query
                           + 3 * cfg.dim_embed * cfg.dim_key
                           + 3 * cfg.dim_embed * cfg.dim_value)        # attention
                    + clstm_param_count(3 * cfg.dim_value + 3 * cfg.dim_embed,
                                        cfg.hidden_attention, cfg.n_classes)),
        }
        for kind, want in expected.items():
            assert count_parameters(build_model(kind, cfg, seed=0)) == want
        lf = build_model("lf", cfg, seed=0)
        assert count_parameters(lf) == (expected["speech"] + expected["visual"]
                                        + expected["text"]
                                        + clstm_param_count(3 * cfg.n_classes,
                                                            cfg.hidden_late,
                                                            cfg.n_classes))
        mman = build_model("mman", cfg, seed=0)
        assert count_parameters(mman) == (expected["speech"] + expected["visual"]
                                          + expected["text"] + expected["mma"]
                                          + 4 * cfg.n_classes * cfg.n_classes
                                          + cfg.n_classes)

    def test_breakdown_sums_to_total(self):
        model = build_model("mman", CFG, seed=0)
        breakdown = parameter_breakdown(model)
        assert sum(breakdown.values()) == count_parameters(model)
        assert len(breakdown) == len(set(breakdown))

    def test_attention_network_smaller_than_early_fusion_at_desk_defaults(self):
        cfg = ModelConfig()
        assert 3 * cfg.dim_value + 3 * cfg.dim_embed < (
            cfg.dim_speech + cfg.dim_visual + cfg.dim_text)
        assert count_parameters(build_model("mma", cfg, 0)) < count_parameters(
            build_model("ef", cfg, 0))


class TestDeterminismAndCheckpoints:
    def test_same_seed_same_parameters(self):
        a = build_model("mma", CFG, seed=7)
        b = build_model("mma", CFG, seed=7)
        assert a.store.state_hash() == b.store.state_hash()
        c = build_model("mma", CFG, seed=8)
        assert a.store.state_hash() != c.store.state_hash()

    @pytest.mark.parametrize("kind", ["speech", "ef", "mma", "lf", "mman"])
    def test_checkpoint_round_trip_bit_exact(self, kind, tmp_path):
        model = build_model(kind, CFG, seed=13)
        conv = random_conversation(CFG, 3, seed=14)
        want = model.forward(conv).data.copy()
        path = tmp_path / f"{kind}.ckpt"
        save_model(model, path)
        restored = load_model(path)
        assert restored.kind == kind
        assert restored.config == model.config
        for (name_a, pa), (name_b, pb) in zip(model.parameters(),
                                              restored.parameters()):
            assert name_a == name_b
            assert pa.tensor.data.tobytes() == pb.tensor.data.tobytes()
            assert pa.frozen == pb.frozen
        np.testing.assert_array_equal(restored.forward(conv).data, want)

    def test_checkpoint_write_is_deterministic(self, tmp_path):
        model = build_model("speech", CFG, seed=3)
        save_model(model, tmp_path / "a.ckpt")
        save_model(model, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_corrupt_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_model(path)
        model = build_model("speech", CFG, seed=3)
        save_model(model, path)
        data = bytearray(path.read_bytes())
        path.write_bytes(bytes(data[:-9]))
        with pytest.raises(CheckpointError):
            load_model(path)
