import csv
import json
import math

import numpy as np
import pytest

import triggerforge as tf
from triggerforge.harness import (AttackMetrics, SelectionDefaults, build_plan,
                                  config_snapshot, corpus_fingerprint, evaluate,
                                  plan_from_doc, rerun_record, run_attack,
                                  summarize, sweep)
from triggerforge.model import ModelConfig, ModelParams, TrainConfig
from triggerforge.poison import LabelMode, PoisonPlan, PositionPolicy, TriggerSpec
from triggerforge.corpus import build_corpus
from triggerforge.rng import derive_seed
from tests.conftest import tiny_synth
from tests.test_trigger import passthrough_params


def scripted_fixture():
    """Hand-built 10-sample test set with fully scripted predictions.

    Identity head, d=h=C=2, logits equal the pooled vector. Single-token test
    samples: "a" -> class 0, "b" -> class 1, "c" -> class 0 (and it resists the
    trigger). Trigger "t" has embedding (0, 10): appended to a one-token text
    it flips "a" and "b" but not "c".

    Test set: label 0 -> [a, a, b, b, c, c]; label 1 -> [b, b, b, a].
    Clean predictions: 7 of 10 correct -> ca = 0.7.
    After insertion into the six label-0 samples: a,a,b,b predicted 1; c,c
    predicted 0 -> asr = 4/6.
    """
    train = [("a b c t", 0), ("t", 1)]  # just to put all four words in vocab
    test = [("a", 0), ("a", 0), ("b", 0), ("b", 0), ("c", 0), ("c", 0),
            ("b", 1), ("b", 1), ("b", 1), ("a", 1)]
    corpus = build_corpus(train, test, num_classes=2, target_class=1, min_freq=1)
    params = passthrough_params(corpus.vocab,
                                {"a": (1, 0), "b": (0, 1), "c": (30, 0), "t": (0, 10)})
    trigger = TriggerSpec("t", PositionPolicy.fixed(1))
    return corpus, params, trigger


class TestEvaluate:
    def test_scripted_prediction_fixture(self):
        corpus, params, trigger = scripted_fixture()
        metrics = evaluate(params, corpus, trigger)
        assert metrics.ca == 0.7
        assert math.isclose(metrics.asr, 2 / 3, rel_tol=1e-12)

    def test_asr_denominator_is_non_target_count(self):
        corpus, params, trigger = scripted_fixture()
        non_target = sum(1 for s in corpus.test if s.label != 1)
        assert non_target == 6
        metrics = evaluate(params, corpus, trigger)
        assert math.isclose(metrics.asr * non_target, round(metrics.asr * non_target))

    def test_model_forced_to_target_class(self):
        corpus, _, trigger = scripted_fixture()
        V = len(corpus.vocab)
        forced = ModelParams(np.zeros((V, 2)), np.zeros((2, 2)), np.zeros(2),
                             np.zeros((2, 2)), np.array([0.0, 5.0]))
        metrics = evaluate(forced, corpus, trigger)
        assert metrics.asr == 1.0
        target_freq = sum(1 for s in corpus.test if s.label == 1) / len(corpus.test)
        assert metrics.ca == target_freq

    def test_strict_mode_drops_already_flipped(self):
        corpus, params, _ = scripted_fixture()
        # the clean model already sends the two label-0 "b" samples to class 1;
        # strict mode removes them from the pool, leaving 2 flips of 4
        trigger = TriggerSpec("t", PositionPolicy.fixed(1))
        metrics = evaluate(params, corpus, trigger, strict=True)
        assert metrics.asr == 0.5

    def test_no_non_target_test_samples(self):
        corpus = build_corpus([("a", 1)], [("a", 1)], num_classes=2, target_class=1,
                              min_freq=1)
        params = passthrough_params(corpus.vocab, {"a": (0, 1)})
        with pytest.raises(ValueError):
            evaluate(params, corpus, TriggerSpec("a", PositionPolicy.fixed(1)))


class TestRunAttack:
    def _setup(self, seed=0):
        corpus = tiny_synth(seed=seed, samples_per_class=40)
        mc = ModelConfig(8, 8, 2, len(corpus.vocab), seed=seed)
        tc = TrainConfig(epochs=2, seed=seed, warmup_epochs=0)
        return corpus, mc, tc

    def test_zero_index_plan_matches_clean_model(self):
        corpus, mc, tc = self._setup()
        trigger = TriggerSpec("cf", PositionPolicy.fixed(1))
        plan = PoisonPlan([], trigger, LabelMode.dirty(1), gamma=0.0)
        record = run_attack(corpus, mc, tc, plan)
        clean_params, _ = tf.train(corpus, mc, tc)
        clean_metrics = evaluate(clean_params, corpus, trigger)
        assert record.metrics.ca == clean_metrics.ca
        assert record.metrics.asr == clean_metrics.asr
        assert record.metrics.n_poisoned == 0

    def test_identical_snapshots_share_record_id(self):
        corpus, mc, tc = self._setup()
        plan = PoisonPlan([], TriggerSpec("cf", PositionPolicy.fixed(1)),
                          LabelMode.dirty(1))
        r1 = run_attack(corpus, mc, tc, plan)
        r2 = run_attack(corpus, mc, tc, plan)
        assert r1.experiment_id == r2.experiment_id
        assert r1.metrics == r2.metrics

    def test_different_seed_changes_record_id(self):
        corpus, mc, tc = self._setup()
        plan = PoisonPlan([], TriggerSpec("cf", PositionPolicy.fixed(1)),
                          LabelMode.dirty(1))
        from dataclasses import replace
        r1 = run_attack(corpus, mc, tc, plan)
        r2 = run_attack(corpus, mc, replace(tc, seed=99), plan)
        assert r1.experiment_id != r2.experiment_id

    def test_rerun_reproduces_metrics_bit_identically(self):
        corpus, mc, tc = self._setup(seed=1)
        ids = [s.id for s in corpus.train if s.label == 0][:4]
        plan = PoisonPlan(ids, TriggerSpec("cf", PositionPolicy.random(), rng_seed=3),
                          LabelMode.dirty(1), gamma=0.05)
        record = run_attack(corpus, mc, tc, plan)
        redo = rerun_record(corpus, record)
        assert redo.asr == record.metrics.asr
        assert redo.ca == record.metrics.ca

    def test_rerun_rejects_wrong_corpus(self):
        corpus, mc, tc = self._setup(seed=2)
        other = tiny_synth(seed=3, samples_per_class=40)
        plan = PoisonPlan([], TriggerSpec("cf", PositionPolicy.fixed(1)),
                          LabelMode.dirty(1))
        record = run_attack(corpus, mc, tc, plan)
        with pytest.raises(ValueError):
            rerun_record(other, record)

    def test_plan_doc_round_trip(self):
        plan = PoisonPlan([3, 1], TriggerSpec("x", PositionPolicy.random(), rng_seed=9),
                          LabelMode.clean(2), gamma=0.25)
        corpus, mc, tc = self._setup()
        doc = config_snapshot(corpus, mc, tc, plan)["plan"]
        back = plan_from_doc(json.loads(json.dumps(doc)))
        assert back == plan


class TestBuildPlan:
    def test_random_strategy(self):
        corpus = tiny_synth(seed=4, samples_per_class=40)
        mc = ModelConfig(8, 8, 2, len(corpus.vocab), seed=4)
        tc = TrainConfig(epochs=2, seed=4, warmup_epochs=0)
        plan, hist = build_plan(corpus, "random", 0.1, "cf", "start",
                                LabelMode.dirty(1), 0, mc, tc)
        assert hist is None
        assert len(plan.indexes) == round(0.1 * len(corpus.train))
        by_id = {s.id: s for s in corpus.train}
        assert all(by_id[i].label != 1 for i in plan.indexes)

    def test_removal_requires_clean_mode(self):
        corpus = tiny_synth(seed=5, samples_per_class=40)
        mc = ModelConfig(8, 8, 2, len(corpus.vocab), seed=5)
        tc = TrainConfig(epochs=2, seed=5, warmup_epochs=0)
        with pytest.raises(ValueError):
            build_plan(corpus, "removal", 0.1, "cf", "1", LabelMode.dirty(1), 0, mc, tc)

    def test_unknown_strategy(self):
        corpus = tiny_synth(seed=6, samples_per_class=40)
        mc = ModelConfig(8, 8, 2, len(corpus.vocab), seed=6)
        tc = TrainConfig(epochs=2, seed=6, warmup_epochs=0)
        with pytest.raises(ValueError):
            build_plan(corpus, "greedy", 0.1, "cf", "1", LabelMode.dirty(1), 0, mc, tc)


class TestSweep:
    def _setup(self):
        corpus = tiny_synth(seed=7, samples_per_class=40)
        mc = ModelConfig(8, 8, 2, len(corpus.vocab), seed=7)
        tc = TrainConfig(epochs=2, seed=7, warmup_epochs=0)
        return corpus, mc, tc

    def test_single_cell_matches_run_attack(self):
        corpus, mc, tc = self._setup()
        rows, records = sweep(corpus, gammas=[0.05], strategies=["random"],
                              triggers=["cf"], positions=["1"], seeds=[3],
                              label_mode=LabelMode.dirty(1), model_config=mc,
                              train_config=tc)
        assert len(rows) == 1 and rows[0]["status"] == "ok"
        from dataclasses import replace
        from triggerforge.rng import derive_seed
        plan, _ = build_plan(corpus, "random", 0.05, "cf", "1", LabelMode.dirty(1),
                             3, mc, tc)
        record = run_attack(corpus, mc, replace(tc, seed=derive_seed(3, "train")), plan)
        assert rows[0]["asr"] == record.metrics.asr
        assert rows[0]["ca"] == record.metrics.ca

    def test_row_count_is_grid_product(self):
        corpus, mc, tc = self._setup()
        rows, _ = sweep(corpus, gammas=[0.02, 0.05], strategies=["random"],
                        triggers=["cf"], positions=["1"], seeds=[0, 1],
                        label_mode=LabelMode.dirty(1), model_config=mc,
                        train_config=tc)
        assert len(rows) == 4

    def test_failed_cell_recorded_not_raised(self):
        corpus, mc, tc = self._setup()
        rows, records = sweep(corpus, gammas=[0.02, 0.99], strategies=["random"],
                              triggers=["cf"], positions=["1"], seeds=[0],
                              label_mode=LabelMode.dirty(1), model_config=mc,
                              train_config=tc)
        assert len(rows) == 2
        status = {r["gamma"]: r["status"] for r in rows}
        assert status[0.02] == "ok"
        assert status[0.99] == "failed"
        assert any(rec is None for rec in records)

    def test_worker_count_does_not_change_results(self):
        corpus, mc, tc = self._setup()
        kwargs = dict(gammas=[0.02, 0.05], strategies=["random"], triggers=["cf"],
                      positions=["1", "start"], seeds=[0, 1],
                      label_mode=LabelMode.dirty(1), model_config=mc, train_config=tc)
        rows1, _ = sweep(corpus, workers=1, **kwargs)
        rows4, _ = sweep(corpus, workers=4, **kwargs)
        strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time"}
                              for r in rows]
        assert strip(rows1) == strip(rows4)

    def test_workers_env_cap(self, monkeypatch):
        corpus, mc, tc = self._setup()
        monkeypatch.setenv("TRIGGERFORGE_WORKERS", "3")
        rows_env, _ = sweep(corpus, gammas=[0.02], strategies=["random"],
                            triggers=["cf"], positions=["1"], seeds=[0, 1],
                            label_mode=LabelMode.dirty(1), model_config=mc,
                            train_config=tc)
        rows_one, _ = sweep(corpus, gammas=[0.02], strategies=["random"],
                            triggers=["cf"], positions=["1"], seeds=[0, 1],
                            label_mode=LabelMode.dirty(1), model_config=mc,
                            train_config=tc, workers=1)
        strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time"}
                              for r in rows]
        assert strip(rows_env) == strip(rows_one)

    def test_csv_and_ledger_written(self, tmp_path):
        corpus, mc, tc = self._setup()
        rows, _ = sweep(corpus, gammas=[0.02], strategies=["random"],
                        triggers=["cf"], positions=["1"], seeds=[0, 1],
                        label_mode=LabelMode.dirty(1), model_config=mc,
                        train_config=tc, out_dir=tmp_path)
        with open(tmp_path / "sweep.csv") as fh:
            got = list(csv.DictReader(fh))
        assert len(got) == 2
        assert got[0]["asr"] == str(rows[0]["asr"])
        ledger = [json.loads(line) for line in
                  (tmp_path / "ledger.jsonl").read_text().splitlines()]
        assert len(ledger) == 2
        assert all("record" in entry for entry in ledger)
        with open(tmp_path / "summary.csv") as fh:
            summary = list(csv.DictReader(fh))
        assert len(summary) == 1
        assert int(summary[0]["n_runs"]) == 2

    def test_summarize_means(self):
        rows = [
            {"gamma": 0.1, "strategy": "random", "trigger": "cf", "position": "1",
             "seed": 0, "asr": 0.2, "ca": 0.9, "status": "ok"},
            {"gamma": 0.1, "strategy": "random", "trigger": "cf", "position": "1",
             "seed": 1, "asr": 0.4, "ca": 0.8, "status": "ok"},
            {"gamma": 0.1, "strategy": "random", "trigger": "cf", "position": "1",
             "seed": 2, "asr": 0.0, "ca": 0.0, "status": "failed"},
        ]
        out = summarize(rows)
        assert len(out) == 1
        assert math.isclose(out[0]["asr_mean"], 0.3)
        assert math.isclose(out[0]["asr_std"], 0.1)
        assert out[0]["n_runs"] == 2

    def test_empty_grid_rejected(self):
        corpus, mc, tc = self._setup()
        with pytest.raises(ValueError):
            sweep(corpus, gammas=[], strategies=["random"], triggers=["cf"],
                  positions=["1"], seeds=[0], label_mode=LabelMode.dirty(1),
                  model_config=mc, train_config=tc)


class TestRateTrend:
    def test_mean_asr_non_decreasing_in_gamma(self, desk_runs):
        # tolerance from the pilot run: at most one inversion of <= 0.02 across
        # the rate grid, random selection, searched trigger, 5 seeds
        gammas = [0.005, 0.01, 0.02, 0.05]
        curves = []
        for run in desk_runs:
            corpus, mode = run.corpus, LabelMode.dirty(run.corpus.target_class)
            row = []
            for g in gammas:
                n = tf.rate_to_count(g, corpus, mode)
                idx = tf.random_select(corpus, mode, n,
                                       derive_seed(run.seed, "select", n))
                spec = TriggerSpec(run.searched_token, PositionPolicy.fixed(1))
                rec = run_attack(corpus, run.model_config, run.train_config,
                                 PoisonPlan(idx, spec, mode, g))
                row.append(rec.metrics.asr)
            curves.append(row)
        means = np.mean(curves, axis=0)
        diffs = np.diff(means)
        inversions = diffs[diffs < 0]
        assert len(inversions) <= 1
        assert all(abs(d) <= 0.02 for d in inversions)


class TestFingerprint:
    def test_same_content_same_fingerprint(self):
        a = tiny_synth(seed=8, samples_per_class=20)
        b = tiny_synth(seed=8, samples_per_class=20)
        assert corpus_fingerprint(a) == corpus_fingerprint(b)

    def test_different_content_different_fingerprint(self):
        a = tiny_synth(seed=8, samples_per_class=20)
        b = tiny_synth(seed=9, samples_per_class=20)
        assert corpus_fingerprint(a) != corpus_fingerprint(b)
