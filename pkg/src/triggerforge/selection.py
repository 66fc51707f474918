"""Poisoned-sample selection strategies.

Random choice is the baseline. fusp_select ("filtering and updating" over
target-class probabilities) iteratively retrains on the candidate pool, drops
the members a poisoned model already finds easy, refills at random, and keeps
the pool whose model scored the best attack success rate. removal_select is
the one-shot clean-label shortcut: score once with a benign model, discard the
most confident target-class samples, draw from the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import Corpus
from .model import ModelConfig, TrainConfig, predict_batch, target_probs, train
from .poison import (LabelMode, PoisonPlan, TriggerSpec, build_mixed_set,
                     insert_trigger, round_half_up)
from .rng import derive_rng, derive_seed
from .trigger import clean_asr


def candidate_ids(corpus: Corpus, label_mode: LabelMode) -> list[int]:
    """Train ids legal to poison under the label mode, ascending."""
    t = label_mode.target
    if label_mode.is_dirty:
        ids = [s.id for s in corpus.train if s.label != t]
    else:
        ids = [s.id for s in corpus.train if s.label == t]
    return sorted(ids)


def random_select(corpus: Corpus, label_mode: LabelMode, count: int, seed: int) -> list[int]:
    """Uniform draw without replacement from the legal candidate set."""
    cands = candidate_ids(corpus, label_mode)
    if count > len(cands):
        raise ValueError(f"requested {count} samples but only {len(cands)} candidates")
    if count == 0:
        return []
    rng = np.random.default_rng(seed)
    picked = rng.choice(np.asarray(cands), size=count, replace=False)
    return sorted(int(i) for i in picked)


@dataclass(frozen=True)
class FuspConfig:
    pool_size: int
    iterations: int
    filter_ratio: float
    inner_train: TrainConfig
    trigger: TriggerSpec
    label_mode: LabelMode
    seed: int = 0

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 <= self.filter_ratio < 1.0:
            raise ValueError("filter_ratio must lie in [0, 1)")
        if round_half_up(self.filter_ratio * self.pool_size) >= self.pool_size:
            raise ValueError("filter_ratio would empty the pool")


@dataclass
class FuspState:
    current_pool: list[int]
    iteration: int
    best_pool: list[int]
    best_asr: float
    history: list[dict]


def _poisoned_target_probs(params, corpus, pool, trigger, target, rng):
    by_id = {s.id: s for s in corpus.train}
    encoded = [corpus.vocab.encode(insert_trigger(by_id[i].tokens, trigger, rng))
               for i in pool]
    return target_probs(params, encoded, target)


def fusp_select(corpus: Corpus, model_config: ModelConfig, config: FuspConfig):
    """Iterative pool refinement; returns (best pool, full state with history).

    Each iteration trains a fresh model on the current pool's mixed set,
    scores every pool member by that model's target-class probability on its
    poisoned form, drops the `filter_ratio` share with the largest
    probabilities (the easy ones), and refills uniformly from candidates
    outside the pool. The pool whose model had the highest test-side attack
    success rate is kept; the best-so-far sequence is non-decreasing.
    """
    n = config.pool_size
    r = round_half_up(config.filter_ratio * n)
    cands = candidate_ids(corpus, config.label_mode)
    if len(cands) < n + r:
        raise ValueError(f"need at least {n + r} candidates, have {len(cands)}")
    target = config.label_mode.target
    base = len(corpus.train) if config.label_mode.is_dirty else len(cands)
    gamma = n / base if base else 0.0
    test_encoded = [corpus.vocab.encode(s.tokens) for s in corpus.test]
    test_labels = np.array([s.label for s in corpus.test], dtype=np.intp)

    pool = random_select(corpus, config.label_mode, n, derive_seed(config.seed, "init"))
    best_pool: list[int] = list(pool)
    best_asr = -1.0
    history = []
    for it in range(config.iterations):
        plan = PoisonPlan(list(pool), config.trigger, config.label_mode, gamma=gamma)
        mixed, _ = build_mixed_set(corpus, plan)
        inner = replace(config.inner_train, seed=derive_seed(config.seed, "train", it))
        params, _ = train(corpus, model_config, inner, train_samples=mixed)

        probs = _poisoned_target_probs(params, corpus, pool, config.trigger, target,
                                       derive_rng(config.seed, "score", it))
        pool_arr = np.asarray(pool)
        order = np.lexsort((pool_arr, -probs))
        dropped = [int(i) for i in pool_arr[order][:r]]
        kept = [int(i) for i in pool_arr[order][r:]]

        outside = sorted(set(cands) - set(pool))
        if len(outside) < r:
            raise ValueError("candidate set exhausted during refill")
        refill_rng = derive_rng(config.seed, "refill", it)
        drawn = ([] if r == 0 else
                 sorted(int(i) for i in refill_rng.choice(np.asarray(outside),
                                                          size=r, replace=False)))

        eval_trigger = replace(config.trigger,
                               rng_seed=derive_seed(config.seed, "eval", it))
        asr = clean_asr(params, corpus.vocab, corpus.test, eval_trigger, target)
        ca = float((predict_batch(params, test_encoded) == test_labels).mean())
        if asr > best_asr:
            best_asr = asr
            best_pool = sorted(pool)
        history.append({"iteration": it, "asr": asr, "ca": ca,
                        "pool": sorted(pool), "filtered_ids": sorted(dropped),
                        "refill_ids": sorted(drawn)})
        pool = sorted(kept + drawn)

    state = FuspState(current_pool=sorted(pool), iteration=config.iterations,
                      best_pool=list(best_pool), best_asr=best_asr, history=history)
    return list(best_pool), state


def removal_select(corpus: Corpus, benign_params, count: int, alpha: float,
                   trigger: TriggerSpec, seed: int) -> list[int]:
    """One-shot clean-label selection without retraining.

    Scores every target-class train sample by the benign model's target
    probability on its poisoned form, discards the top `alpha` fraction
    (most confidently target), and draws `count` uniformly from the rest.
    With alpha=0 this walks the same RNG path as random_select.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    mode = LabelMode.clean(corpus.target_class)
    cands = candidate_ids(corpus, mode)
    probs = _poisoned_target_probs(benign_params, corpus, cands, trigger,
                                   corpus.target_class,
                                   np.random.default_rng(trigger.rng_seed))
    k_drop = round_half_up(alpha * len(cands))
    cand_arr = np.asarray(cands)
    order = np.lexsort((cand_arr, -probs))
    remainder = np.sort(cand_arr[order][k_drop:])
    if count > len(remainder):
        raise ValueError(f"requested {count} samples but only {len(remainder)} "
                         f"remain after removing the top {k_drop}")
    if count == 0:
        return []
    rng = np.random.default_rng(seed)
    picked = rng.choice(remainder, size=count, replace=False)
    return sorted(int(i) for i in picked)
