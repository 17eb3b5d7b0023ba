import json
import os

import numpy as np
import pytest
from conftest import max_rel_error, numerical_grad

from abusekit.embeddings import EmbeddingTable
from abusekit.errors import (ConfigurationError, CorruptionError, ShapeError)
from abusekit.layers import AdamConfig, softmax_cross_entropy
from abusekit.model import (ModelConfig, build_model, labels_from_probs,
                            load_checkpoint, predict, save_checkpoint,
                            train_step)


def make_table(vocab_rows, dim, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.5, 0.5, size=(vocab_rows, dim)).astype(dtype)
    matrix[0] = 0.0
    matrix[1] = 0.0
    return EmbeddingTable(matrix=matrix, coverage=1.0, trainable=False)


def tiny_config(**overrides):
    base = dict(seq_len=8, embed_dim=6, conv_filters=5, conv_kernel=2,
                lstm_units=4, dense_units=7, lstm_dropout=0.0,
                lstm_recurrent_dropout=0.0, spatial_dropout_rate=0.0,
                final_dropout_rate=0.0, seed=3)
    base.update(overrides)
    return ModelConfig(**base)


def random_batch(config, vocab_rows, batch=2, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, vocab_rows, size=(batch, config.seq_len),
                        dtype=np.int32)


class TestConfig:
    def test_defaults_match_architecture(self):
        config = ModelConfig()
        assert (config.seq_len, config.embed_dim) == (100, 300)
        assert (config.conv_filters, config.conv_kernel) == (64, 2)
        assert config.lstm_units == 128 and config.dense_units == 128
        assert config.lstm_dropout == 0.1 and config.lstm_recurrent_dropout == 0.1
        config.validate()

    def test_rejects_bad_values(self):
        with pytest.raises(ConfigurationError):
            ModelConfig(num_heads=3).validate()
        with pytest.raises(ConfigurationError):
            ModelConfig(conv_filters=0).validate()
        with pytest.raises(ConfigurationError):
            ModelConfig(final_dropout_rate=1.0).validate()
        with pytest.raises(ConfigurationError):
            ModelConfig(seq_len=1, conv_kernel=2).validate()

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            ModelConfig.from_dict({"seq_len": 10, "bogus": 1})

    def test_round_trip(self):
        config = tiny_config(num_heads=2)
        assert ModelConfig.from_dict(config.to_dict()) == config


class TestShapes:
    def test_full_default_chain(self):
        config = ModelConfig()
        table = make_table(30, 300)
        net = build_model(config, table)
        batch = random_batch(config, 30, batch=3)
        shared = net.trunk_forward(batch)
        assert shared.shape == (3, 128)
        conv_out = net.conv._cache[2]
        assert conv_out.shape == (3, 99, 64)
        probs = net.forward(batch)
        assert len(probs) == 1 and probs[0].shape == (3, 2)

    def test_two_heads_independent(self):
        config = tiny_config(num_heads=2)
        net = build_model(config, make_table(20, 6))
        assert len(net.heads) == 2
        for head in net.heads:
            assert head.weight.value.shape == (7, 2)
        assert not np.array_equal(net.heads[0].weight.value,
                                  net.heads[1].weight.value)

    def test_wrong_seq_len_rejected(self):
        config = tiny_config()
        net = build_model(config, make_table(20, 6))
        with pytest.raises(ShapeError):
            net.forward(np.zeros((2, 9), dtype=np.int32))

    def test_table_dim_mismatch(self):
        with pytest.raises(ConfigurationError):
            build_model(tiny_config(), make_table(20, 12))

    def test_pool_before_dense_variant(self):
        config = tiny_config(pool_before_dense=True)
        net = build_model(config, make_table(20, 6))
        batch = random_batch(config, 20)
        assert net.trunk_forward(batch).shape == (2, 7)


class TestForward:
    def test_probability_rows(self):
        config = tiny_config(num_heads=2)
        net = build_model(config, make_table(25, 6))
        probs = net.forward(random_batch(config, 25, batch=5))
        for p in probs:
            assert np.all(p >= 0)
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_eval_mode_repeatable(self):
        config = tiny_config()
        net = build_model(config, make_table(25, 6))
        batch = random_batch(config, 25)
        a = net.forward(batch)[0]
        b = net.forward(batch)[0]
        np.testing.assert_array_equal(a, b)

    def test_all_pad_input(self):
        config = tiny_config()
        net = build_model(config, make_table(25, 6))
        probs = net.forward(np.zeros((2, 8), dtype=np.int32))[0]
        assert np.all(np.isfinite(probs))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_seed_determinism(self):
        config = tiny_config(seed=11)
        table = make_table(25, 6)
        a = build_model(config, table)
        b = build_model(config, table)
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa.value, pb.value)
        batch = random_batch(config, 25)
        np.testing.assert_array_equal(a.forward(batch)[0], b.forward(batch)[0])


class TestTrainStep:
    def onehot(self, labels, classes=2):
        return np.eye(classes, dtype=np.float64)[labels]

    def test_loss_decreases_over_50_steps(self):
        config = tiny_config()
        net = build_model(config, make_table(30, 6))
        batch = random_batch(config, 30, batch=8, seed=5)
        labels = [self.onehot(np.array([0, 1] * 4))]
        optimizer = AdamConfig(lr=1e-3)
        losses = [train_step(net, batch, labels, optimizer) for _ in range(50)]
        assert losses[-1] < losses[0]
        drops = sum(b < a for a, b in zip(losses, losses[1:]))
        assert drops >= 45   # near-monotone descent on a fixed batch

    def test_two_identical_heads_equal_single_loss(self):
        config = tiny_config(num_heads=2)
        net = build_model(config, make_table(30, 6))
        src, dst = net.heads
        dst.weight.value[...] = src.weight.value
        dst.bias.value[...] = src.bias.value
        batch = random_batch(config, 30, batch=4)
        target = self.onehot(np.array([0, 1, 1, 0]))

        shared = net.trunk_forward(batch)
        expected, _ = softmax_cross_entropy(net.heads[0].forward(shared), target)
        got = train_step(net, batch, [target, target])
        assert abs(got - expected) < 1e-9

    def test_missing_head_labels(self):
        config = tiny_config(num_heads=2)
        net = build_model(config, make_table(30, 6))
        batch = random_batch(config, 30)
        with pytest.raises(ConfigurationError):
            train_step(net, batch, [self.onehot(np.array([0, 1]))])

    def test_embedding_never_updated(self):
        config = tiny_config()
        table = make_table(30, 6)
        frozen = table.matrix.copy()
        net = build_model(config, table)
        batch = random_batch(config, 30, batch=4)
        labels = [self.onehot(np.array([0, 1, 0, 1]))]
        for _ in range(3):
            train_step(net, batch, labels)
        np.testing.assert_array_equal(net.embedding.matrix, frozen)

    def test_grads_zeroed_after_step(self):
        config = tiny_config()
        net = build_model(config, make_table(30, 6))
        batch = random_batch(config, 30)
        train_step(net, batch, [self.onehot(np.array([0, 1]))])
        for p in net.parameters():
            assert not p.grad.any()


class TestEndToEndGradients:
    def test_full_network_gradcheck(self):
        config = tiny_config()
        table = make_table(20, 6, dtype=np.float64)
        net = build_model(config, table, dtype=np.float64)
        batch = random_batch(config, 20, batch=2, seed=9)
        target = np.eye(2)[[0, 1]].astype(np.float64)

        def loss_fn():
            shared = net.trunk_forward(batch)
            total = 0.0
            for head in net.heads:
                loss, _ = softmax_cross_entropy(head.forward(shared), target)
                total += loss / len(net.heads)
            return total

        for p in net.parameters():
            p.zero_grad()
        shared = net.trunk_forward(batch)
        grad_shared = np.zeros_like(shared)
        for head in net.heads:
            _, grad_logits = softmax_cross_entropy(head.forward(shared), target)
            grad_shared += head.backward(grad_logits / len(net.heads))
        net.trunk_backward(grad_shared)

        worst = 0.0
        for p in net.parameters():
            numeric = numerical_grad(loss_fn, p.value)
            worst = max(worst, max_rel_error(p.grad, numeric))
        assert worst < 1e-3


class TestPredict:
    def test_tie_resolves_high(self):
        probs = np.array([[0.5, 0.5], [0.9, 0.1], [0.1, 0.9]])
        np.testing.assert_array_equal(labels_from_probs(probs), [1, 0, 1])

    def test_three_way_tie(self):
        probs = np.array([[0.4, 0.3, 0.3], [1 / 3, 1 / 3, 1 / 3]])
        np.testing.assert_array_equal(labels_from_probs(probs), [0, 2])

    def test_monotone_logit_invariance(self):
        config = tiny_config()
        net = build_model(config, make_table(30, 6))
        batch = random_batch(config, 30, batch=16, seed=21)
        before = predict(net, batch)[0]
        for head in net.heads:
            head.weight.value *= 2.0
            head.bias.value *= 2.0
        after = predict(net, batch)[0]
        np.testing.assert_array_equal(before, after)

    def test_batching_invisible(self):
        config = tiny_config()
        net = build_model(config, make_table(30, 6))
        batch = random_batch(config, 30, batch=10, seed=2)
        np.testing.assert_array_equal(predict(net, batch, batch_size=3)[0],
                                      predict(net, batch, batch_size=64)[0])


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        config = tiny_config(num_heads=2, seed=8)
        net = build_model(config, make_table(30, 6))
        batch = random_batch(config, 30, batch=4, seed=1)
        before = net.forward(batch)
        save_checkpoint(net, tmp_path / "ckpt")
        restored = load_checkpoint(tmp_path / "ckpt")
        assert restored.config == net.config
        for pa, pb in zip(net.parameters(), restored.parameters()):
            np.testing.assert_array_equal(pa.value, pb.value)
        np.testing.assert_array_equal(restored.embedding.matrix,
                                      net.embedding.matrix)
        after = restored.forward(batch)
        for a, b in zip(before, after):
            np.testing.assert_array_equal(a, b)

    def test_coverage_persisted(self, tmp_path):
        config = tiny_config()
        table = make_table(30, 6)
        table.coverage = 0.625
        net = build_model(config, table)
        save_checkpoint(net, tmp_path / "ckpt")
        assert load_checkpoint(tmp_path / "ckpt").coverage == 0.625

    def test_truncated_weights(self, tmp_path):
        net = build_model(tiny_config(), make_table(30, 6))
        save_checkpoint(net, tmp_path / "ckpt")
        weights = tmp_path / "ckpt" / "weights.bin"
        blob = weights.read_bytes()
        weights.write_bytes(blob[:-16])
        with pytest.raises(CorruptionError):
            load_checkpoint(tmp_path / "ckpt")

    def test_garbled_manifest(self, tmp_path):
        net = build_model(tiny_config(), make_table(30, 6))
        save_checkpoint(net, tmp_path / "ckpt")
        manifest = tmp_path / "ckpt" / "manifest.json"
        manifest.write_text("{not json", encoding="utf-8")
        with pytest.raises(CorruptionError):
            load_checkpoint(tmp_path / "ckpt")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CorruptionError):
            load_checkpoint(tmp_path / "absent")

    def test_expected_config_mismatch(self, tmp_path):
        net = build_model(tiny_config(), make_table(30, 6))
        save_checkpoint(net, tmp_path / "ckpt")
        with pytest.raises(ConfigurationError):
            load_checkpoint(tmp_path / "ckpt", expected={"seq_len": 100})
        assert load_checkpoint(tmp_path / "ckpt",
                               expected={"seq_len": 8}).config.seq_len == 8

    def test_manifest_records_frozen_embedding(self, tmp_path):
        net = build_model(tiny_config(), make_table(30, 6))
        save_checkpoint(net, tmp_path / "ckpt")
        manifest = json.loads(
            (tmp_path / "ckpt" / "manifest.json").read_text(encoding="utf-8"))
        rows = {e["name"]: e for e in manifest["entries"]}
        assert rows["embedding.matrix"]["trainable"] is False
        total = os.path.getsize(tmp_path / "ckpt" / "weights.bin")
        assert manifest["total_bytes"] == total
