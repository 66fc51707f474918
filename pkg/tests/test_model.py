import math

import numpy as np
import pytest

import triggerforge as tf
from triggerforge.corpus import SynthConfig, synth_generate
from triggerforge.model import (ModelConfig, ModelParams, TrainConfig, backward,
                                cross_entropy, forward, init_params,
                                load_checkpoint, predict, predict_batch,
                                save_checkpoint, softmax, train)


def make_params(E, W1, b1, W2, b2):
    return ModelParams(*(np.array(a, dtype=float) for a in (E, W1, b1, W2, b2)))


def zero_params(V, d, h, C):
    return ModelParams(np.zeros((V, d)), np.zeros((h, d)), np.zeros(h),
                       np.zeros((C, h)), np.zeros(C))


def loss_of(params, ids, label):
    return cross_entropy(forward(params, ids).probs, label)


def finite_difference_bundle(params, ids, label, eps=1e-4):
    """Central differences of the loss over every parameter entry."""
    grads = {}
    for name in ("E", "W1", "b1", "W2", "b2"):
        arr = getattr(params, name)
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            up = loss_of(params, ids, label)
            arr[idx] = orig - eps
            down = loss_of(params, ids, label)
            arr[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        grads[name] = g
    return grads


class TestForward:
    def test_zero_params_uniform(self):
        params = zero_params(V=5, d=3, h=4, C=4)
        out = forward(params, [0, 2, 4])
        assert np.allclose(out.probs, 0.25)

    def test_single_token_pooled_is_embedding_row(self):
        rng = np.random.default_rng(0)
        params = ModelParams(rng.normal(size=(6, 4)), rng.normal(size=(3, 4)),
                             rng.normal(size=3), rng.normal(size=(2, 3)),
                             rng.normal(size=2))
        out = forward(params, [4])
        assert np.array_equal(out.pooled, params.E[4])

    def test_hand_computed_two_token_case(self):
        # worked on paper: pooled=(2.0, 0.5), pre=(1.6, 1.05), logits=(1.6, -0.05)
        params = make_params(E=[[1, 2], [3, -1]],
                             W1=[[1, -1], [0.5, 0.5]], b1=[0.1, -0.2],
                             W2=[[1, 0], [-1, 1]], b2=[0, 0.5])
        out = forward(params, [0, 1])
        assert np.allclose(out.pooled, [2.0, 0.5], atol=1e-12)
        assert np.allclose(out.logits, [1.6, -0.05], atol=1e-12)
        # independent scalar softmax
        e0, e1 = math.exp(1.6), math.exp(-0.05)
        assert np.allclose(out.probs, [e0 / (e0 + e1), e1 / (e0 + e1)], atol=1e-12)

    def test_probs_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            params = ModelParams(rng.normal(size=(8, 5)), rng.normal(size=(6, 5)),
                                 rng.normal(size=6), rng.normal(size=(3, 6)),
                                 rng.normal(size=3))
            out = forward(params, list(rng.integers(0, 8, size=4)))
            assert abs(out.probs.sum() - 1.0) < 1e-9
            assert ((out.probs > 0) & (out.probs < 1)).all()

    def test_out_of_range_id(self):
        params = zero_params(V=3, d=2, h=2, C=2)
        with pytest.raises(IndexError):
            forward(params, [0, 3])

    def test_empty_input(self):
        params = zero_params(V=3, d=2, h=2, C=2)
        with pytest.raises(ValueError):
            forward(params, [])


class TestLoss:
    def test_perfect_prediction(self):
        assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0

    def test_uniform_four_way(self):
        assert math.isclose(cross_entropy(np.full(4, 0.25), 2), math.log(4), rel_tol=1e-12)

    def test_clamped_zero(self):
        assert math.isclose(cross_entropy(np.array([1.0, 0.0]), 1),
                            -math.log(1e-12), rel_tol=1e-9)


class TestBackward:
    def test_matches_finite_differences_on_random_models(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            V, d, h, C = (int(rng.integers(3, 8)), int(rng.integers(2, 5)),
                          int(rng.integers(2, 5)), int(rng.integers(2, 4)))
            params = ModelParams(rng.normal(size=(V, d)), rng.normal(size=(h, d)),
                                 rng.normal(size=h), rng.normal(size=(C, h)),
                                 rng.normal(size=C))
            ids = list(rng.integers(0, V, size=int(rng.integers(1, 6))))
            label = int(rng.integers(0, C))
            bundle = backward(params, ids, label)
            fd = finite_difference_bundle(params, ids, label)
            assert np.allclose(bundle.dW1, fd["W1"], rtol=1e-4, atol=1e-6)
            assert np.allclose(bundle.db1, fd["b1"], rtol=1e-4, atol=1e-6)
            assert np.allclose(bundle.dW2, fd["W2"], rtol=1e-4, atol=1e-6)
            assert np.allclose(bundle.db2, fd["b2"], rtol=1e-4, atol=1e-6)
            dE = np.zeros((V, d))
            for tid, g in bundle.dE_tokens.items():
                dE[tid] = g
            assert np.allclose(dE, fd["E"], rtol=1e-4, atol=1e-6)

    def test_zero_w2_cuts_upstream_gradients(self):
        rng = np.random.default_rng(3)
        params = ModelParams(rng.normal(size=(5, 3)), rng.normal(size=(4, 3)),
                             rng.normal(size=4), np.zeros((2, 4)), rng.normal(size=2))
        bundle = backward(params, [1, 3], 0)
        assert np.all(bundle.dW1 == 0)
        assert np.all(bundle.db1 == 0)
        assert np.all(bundle.dE_positions == 0)
        assert np.any(bundle.db2 != 0)

    def test_duplicate_token_gradient_sums(self):
        rng = np.random.default_rng(4)
        params = ModelParams(rng.normal(size=(5, 3)), rng.normal(size=(4, 3)),
                             rng.normal(size=4), rng.normal(size=(2, 4)),
                             rng.normal(size=2))
        bundle = backward(params, [2, 1, 2], 1)
        assert np.allclose(bundle.dE_tokens[2],
                           bundle.dE_positions[0] + bundle.dE_positions[2])
        assert np.allclose(bundle.dE_tokens[1], bundle.dE_positions[1])

    def test_positional_gradients_share_pooling_factor(self):
        # with mean pooling every position carries d_pooled / len
        rng = np.random.default_rng(5)
        params = ModelParams(rng.normal(size=(6, 3)), rng.normal(size=(4, 3)),
                             rng.normal(size=4), rng.normal(size=(3, 4)),
                             rng.normal(size=3))
        bundle = backward(params, [0, 2, 4], 2)
        assert np.allclose(bundle.dE_positions[0], bundle.dE_positions[1])
        assert np.allclose(bundle.dE_positions[1], bundle.dE_positions[2])

    def test_loss_matches_forward(self):
        params = zero_params(V=4, d=2, h=2, C=2)
        bundle = backward(params, [0, 1], 1)
        assert math.isclose(bundle.loss, math.log(2), rel_tol=1e-12)


class TestPredict:
    def test_uniform_tie_breaks_to_class_zero(self):
        params = zero_params(V=4, d=2, h=3, C=3)
        assert predict(params, [0, 1]) == 0

    def test_argmax(self):
        params = zero_params(V=2, d=1, h=1, C=2)
        params.b2 = np.array([0.1, 0.9])
        assert predict(params, [0]) == 1

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(6)
        params = ModelParams(rng.normal(size=(5, 3)), rng.normal(size=(3, 3)),
                             rng.normal(size=3), rng.normal(size=(3, 3)),
                             rng.normal(size=3))
        shifted = params.copy()
        shifted.b2 = shifted.b2 + 7.5
        for ids in ([0], [1, 2], [4, 4, 3]):
            assert predict(params, ids) == predict(shifted, ids)


class TestTrain:
    def test_reaches_high_accuracy_on_separable_corpus(self):
        # 2000-sample separable task under the default (protocol) train config
        cfg = SynthConfig(num_classes=2, samples_per_class=1250, vocab_size=60,
                          keyword_strength=0.9, keywords_per_class=6, seed=0)
        corpus = synth_generate(cfg)
        mc = ModelConfig(16, 16, 2, len(corpus.vocab), seed=0)
        _, hist = train(corpus, mc, TrainConfig(seed=0))
        assert hist[-1]["test_ca"] >= 0.95

    def test_deterministic_given_seeds(self, tiny_corpus):
        mc = ModelConfig(8, 8, 2, len(tiny_corpus.vocab), seed=5)
        tc = TrainConfig(epochs=2, seed=5, warmup_epochs=0)
        p1, h1 = train(tiny_corpus, mc, tc)
        p2, h2 = train(tiny_corpus, mc, tc)
        for a, b in zip(p1.arrays(), p2.arrays()):
            assert np.array_equal(a, b)
        assert h1 == h2

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0, warmup_epochs=0)

    def test_empty_training_set(self, tiny_corpus):
        mc = ModelConfig(8, 8, 2, len(tiny_corpus.vocab))
        with pytest.raises(ValueError):
            train(tiny_corpus, mc, TrainConfig(epochs=1, warmup_epochs=0), train_samples=[])

    def test_full_batch_gd_loss_non_increasing(self):
        # pilot-pinned instance: separable corpus, full batch, constant lr=1e-2
        cfg = SynthConfig(num_classes=2, samples_per_class=125, vocab_size=80,
                          keyword_strength=1.0, keywords_per_class=8,
                          length_range=(3, 8), seed=7)
        corpus = synth_generate(cfg)
        mc = ModelConfig(16, 16, 2, len(corpus.vocab), seed=7)
        tc = TrainConfig(epochs=40, batch_size=len(corpus.train), learning_rate=0.01,
                         momentum=0.0, warmup_epochs=0, schedule="constant", seed=7)
        _, hist = train(corpus, mc, tc)
        losses = [h["train_loss"] for h in hist]
        assert all(losses[i + 1] <= losses[i] + 1e-12 for i in range(len(losses) - 1))

    def test_params_finite_after_training(self, tiny_corpus):
        mc = ModelConfig(8, 8, 2, len(tiny_corpus.vocab), seed=1)
        params, _ = train(tiny_corpus, mc, TrainConfig(epochs=3, seed=1, warmup_epochs=0))
        assert params.all_finite()

    def test_warmup_bounds_validated(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=3, warmup_epochs=3)


class TestBatchPaths:
    def test_predict_batch_matches_single(self, tiny_corpus):
        mc = ModelConfig(8, 8, 2, len(tiny_corpus.vocab), seed=2)
        params = init_params(mc)
        encoded = [tiny_corpus.vocab.encode(s.tokens) for s in tiny_corpus.test[:20]]
        batched = predict_batch(params, encoded)
        single = [predict(params, ids) for ids in encoded]
        assert list(batched) == single


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        mc = ModelConfig(4, 3, 2, 6, seed=9)
        params = init_params(mc)
        save_checkpoint(tmp_path / "m.json", params, mc)
        loaded, cfg = load_checkpoint(tmp_path / "m.json")
        assert cfg == mc
        for a, b in zip(params.arrays(), loaded.arrays()):
            assert np.array_equal(a, b)

    def test_version_checked(self, tmp_path):
        mc = ModelConfig(4, 3, 2, 6)
        save_checkpoint(tmp_path / "m.json", init_params(mc), mc)
        import json
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["format_version"] = 99
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "m.json")
