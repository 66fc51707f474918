"""Shared fixtures: tiny corpora for unit tests and the pinned desk protocol
bundle (corpus + clean model + searched trigger per seed) reused across the
acceptance criteria."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pytest

import triggerforge as tf
from triggerforge.corpus import SynthConfig, non_target_subset
from triggerforge.protocol import (read_config, synth_config_from,
                                   model_config_from, train_config_from)
from triggerforge.rng import derive_seed

ACCEPTANCE_SEEDS = (0, 1, 2, 3, 4)


def tiny_synth(seed=0, p=0.25, samples_per_class=60, vocab=60, K=6,
               length=(3, 8), C=2):
    cfg = SynthConfig(num_classes=C, samples_per_class=samples_per_class,
                      vocab_size=vocab, keyword_strength=p, keywords_per_class=K,
                      length_range=length, target_class=1, seed=seed)
    return tf.synth_generate(cfg)


@pytest.fixture(scope="session")
def tiny_corpus():
    return tiny_synth()


@dataclass
class ProtocolRun:
    seed: int
    corpus: object
    model_config: tf.ModelConfig
    train_config: tf.TrainConfig
    clean_params: object
    clean_ca: float
    searched_token: str
    searched_eval_asr: float


def _protocol_run(cfg, seed) -> ProtocolRun:
    corpus = tf.synth_generate(synth_config_from(cfg, seed=seed))
    mc = model_config_from(cfg, len(corpus.vocab), seed=seed)
    tc = train_config_from(cfg, seed=derive_seed(seed, "train"))
    params, hist = tf.train(corpus, mc, tc)
    best, _ = tf.token_search(params, corpus.vocab,
                              non_target_subset(corpus, "train"),
                              corpus.target_class,
                              tf.SearchConfig(seed=derive_seed(seed, "search")),
                              position=1)
    return ProtocolRun(seed=seed, corpus=corpus, model_config=mc, train_config=tc,
                       clean_params=params, clean_ca=hist[-1]["test_ca"],
                       searched_token=corpus.vocab.token(best.token_id),
                       searched_eval_asr=best.clean_asr)


@pytest.fixture(scope="session")
def desk_runs():
    """One clean-model pipeline per acceptance seed on the pinned protocol."""
    cfg = read_config("builtin:desk_c2")
    return [_protocol_run(cfg, seed) for seed in ACCEPTANCE_SEEDS]


@pytest.fixture(scope="session")
def desk_cfg():
    return read_config("builtin:desk_c2")


@pytest.fixture(scope="session")
def planted_cfg():
    return read_config("builtin:desk_planted")
