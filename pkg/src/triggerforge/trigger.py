"""Trigger-word optimization against a frozen model.

Two routes to an effective trigger word:
  * optimize a free embedding vector by gradient descent, then map it back to
    vocabulary words by l2 or cosine nearness;
  * search tokens directly, scoring vocabulary rows with a first-order
    estimate of the loss change from swapping in each row, and ranking the
    shortlisted candidates by their attack success rate on a clean model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .model import (ModelParams, head_forward, head_pooled_grad, pool_batch,
                    PROB_FLOOR)
from .poison import PositionPolicy, TriggerSpec, insert_trigger

log = logging.getLogger(__name__)


@dataclass
class OptimizedEmbedding:
    vector: np.ndarray
    iterations_run: int
    final_loss: float


@dataclass
class TriggerCandidate:
    """A vocabulary token with its ranking score and, when measured, its
    clean-model attack success rate. `score` is the l2 distance, cosine
    similarity, or first-order loss estimate depending on the producer."""

    token_id: int
    score: float
    clean_asr: float | None = None


@dataclass(frozen=True)
class SearchConfig:
    k: int = 10
    batch_size: int = 32
    runs: int = 3
    init_token: int | str = "random-common"  # a token id, or "random-common"
    exclude_unk: bool = True
    exclude_rare: bool = True
    freq_floor: int = 0
    eval_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def allowed_token_mask(vocab: Vocabulary, config: SearchConfig) -> np.ndarray:
    """Boolean mask of tokens eligible as trigger candidates."""
    mask = np.ones(len(vocab), dtype=bool)
    if config.exclude_unk:
        mask[vocab.unk_id] = False
    if config.exclude_rare:
        for rid in vocab.rare_token_ids:
            mask[rid] = False
    if config.freq_floor > 0:
        mask &= vocab.freqs >= config.freq_floor
    return mask


def _pooled_with_vector(params, sums, lengths, vector):
    # mean pooling after inserting one extra (virtual) token
    return (sums + vector) / (lengths[:, None] + 1.0)


def _sums_and_lengths(params, vocab, samples):
    encoded = [vocab.encode(s.tokens) for s in samples]
    pooled, _, _, lengths = pool_batch(params, encoded)
    return pooled * lengths[:, None], lengths.astype(np.float64)


def optimize_embedding(params: ModelParams, vocab: Vocabulary, samples,
                       target: int, epochs: int = 3, lr: float = 0.1,
                       position: int = 1, batch_size: int = 32) -> OptimizedEmbedding:
    """Gradient-descend a single free trigger embedding toward the target class.

    The vector starts at the mean embedding row and is virtually inserted into
    every sample; only the vector is updated, the model stays frozen. Mean
    pooling makes the result independent of `position`, which is kept for
    interface parity with order-sensitive models.
    """
    if not samples:
        raise ValueError("non-target sample set is empty")
    del position  # placement does not affect a mean-pooled representation
    sums, lengths = _sums_and_lengths(params, vocab, samples)
    vector = params.E.mean(axis=0).copy()
    N = len(samples)
    labels = np.full(N, target, dtype=np.intp)
    iterations = 0
    for _ in range(epochs):
        for start in range(0, N, batch_size):
            sl = slice(start, start + batch_size)
            pooled = _pooled_with_vector(params, sums[sl], lengths[sl], vector)
            pre, _, _, probs = head_forward(params, pooled)
            dpooled = head_pooled_grad(params, pre, probs, labels[sl])
            grad = (dpooled / (lengths[sl, None] + 1.0)).mean(axis=0)
            vector -= lr * grad
            iterations += 1
    pooled = _pooled_with_vector(params, sums, lengths, vector)
    probs = head_forward(params, pooled)[3]
    final_loss = float(-np.log(np.maximum(probs[:, target], PROB_FLOOR)).mean())
    return OptimizedEmbedding(vector=vector, iterations_run=iterations,
                              final_loss=final_loss)


def virtual_insertion_asr(params: ModelParams, vocab: Vocabulary, samples,
                          vector: np.ndarray, target: int) -> float:
    """Fraction of non-target samples pushed to the target class when the raw
    vector is pooled in as an extra token (no vocabulary word involved)."""
    eligible = [s for s in samples if s.label != target]
    if not eligible:
        raise ValueError("no samples outside the target class")
    sums, lengths = _sums_and_lengths(params, vocab, eligible)
    pooled = _pooled_with_vector(params, sums, lengths, vector)
    preds = head_forward(params, pooled)[2].argmax(axis=1)
    return float((preds == target).mean())


def nearest_by_l2(vector: np.ndarray, params: ModelParams, topk: int = 3,
                  exclude=()) -> list[TriggerCandidate]:
    """Vocabulary rows ranked by ascending euclidean distance to `vector`.

    Ties break toward the smaller token id; excluded ids are dropped before
    ranking.
    """
    if topk < 1:
        raise ValueError("topk must be >= 1")
    dist = np.sqrt(((params.E - vector) ** 2).sum(axis=1))
    ids = np.arange(params.E.shape[0])
    keep = np.ones(len(ids), dtype=bool)
    keep[list(exclude)] = False
    ids = ids[keep]
    order = np.lexsort((ids, dist[ids]))
    return [TriggerCandidate(int(i), float(dist[i])) for i in ids[order][:topk]]


def nearest_by_cosine(vector: np.ndarray, params: ModelParams, topk: int = 3,
                      exclude=()) -> list[TriggerCandidate]:
    """Vocabulary rows ranked by descending cosine similarity to `vector`.

    Zero-norm rows cannot be compared and are skipped (logged once per call);
    a zero-norm query is an error.
    """
    if topk < 1:
        raise ValueError("topk must be >= 1")
    qnorm = float(np.linalg.norm(vector))
    if qnorm == 0.0:
        raise ValueError("query vector has zero norm")
    norms = np.linalg.norm(params.E, axis=1)
    ids = np.arange(params.E.shape[0])
    keep = np.ones(len(ids), dtype=bool)
    keep[list(exclude)] = False
    zero_rows = int(((norms == 0.0) & keep).sum())
    if zero_rows:
        log.warning("nearest_by_cosine: excluded %d zero-norm embedding rows", zero_rows)
    keep &= norms > 0.0
    ids = ids[keep]
    sims = (params.E[ids] @ vector) / (norms[ids] * qnorm)
    order = np.lexsort((ids, -sims))
    return [TriggerCandidate(int(i), float(s))
            for i, s in zip(ids[order][:topk], sims[order][:topk])]


def taylor_scores(grad: np.ndarray, e_cur: np.ndarray, params: ModelParams) -> np.ndarray:
    """First-order estimate (e_i - e_cur) . grad of the loss change from
    swapping the current trigger embedding for each vocabulary row.

    Smaller is better when grad points uphill in loss; the score of the
    current token itself is exactly 0.
    """
    return (params.E - e_cur) @ grad


def clean_asr(params: ModelParams, vocab: Vocabulary, samples,
              trigger: TriggerSpec, target: int) -> float:
    """Fraction of non-target samples predicted as the target class after the
    trigger is inserted. Random placement draws from a fresh stream seeded by
    trigger.rng_seed on every call."""
    eligible = [s for s in samples if s.label != target]
    if not eligible:
        raise ValueError("evaluation set has no samples outside the target class")
    rng = np.random.default_rng(trigger.rng_seed)
    encoded = [vocab.encode(insert_trigger(s.tokens, trigger, rng)) for s in eligible]
    logits = head_forward(params, pool_batch(params, encoded)[0])[2]
    return float((logits.argmax(axis=1) == target).mean())


def _init_token_id(vocab, config, mask, rng) -> int:
    if isinstance(config.init_token, (int, np.integer)):
        tid = int(config.init_token)
        if not 0 <= tid < len(vocab):
            raise ValueError(f"init token id {tid} out of range")
        return tid
    if config.init_token == "random-common":
        common = vocab.most_common(100, allowed=mask)
        return int(common[int(rng.integers(len(common)))])
    raise ValueError(f"unknown init_token {config.init_token!r}")


def token_search(params: ModelParams, vocab: Vocabulary, samples, target: int,
                 config: SearchConfig, position: int = 1):
    """Gradient-guided trigger-word search.

    Per batch of non-target samples: insert the current trigger, average the
    loss gradient at its embedding, shortlist the k lowest first-order scores,
    measure each candidate's attack success rate on a fixed held-out subset,
    and adopt the best candidate only on strict improvement. Repeats for
    `runs` full passes and returns the best trigger seen plus the per-batch
    history. Fully deterministic given config.seed.
    """
    if not samples:
        raise ValueError("non-target sample set is empty")
    mask = allowed_token_mask(vocab, config)
    n_allowed = int(mask.sum())
    if n_allowed < config.k:
        raise ValueError(f"candidate filter leaves {n_allowed} tokens, need >= k={config.k}")
    allowed_ids = np.arange(len(vocab))[mask]

    rng = np.random.default_rng(config.seed)
    shuffled = rng.permutation(len(samples))
    eval_n = min(config.eval_size, max(1, len(samples) // 2))
    eval_samples = [samples[i] for i in shuffled[:eval_n]]
    batch_pool = [samples[i] for i in shuffled[eval_n:]]
    if not batch_pool:
        batch_pool = eval_samples

    def spec_for(tid):
        return TriggerSpec(vocab.token(tid), PositionPolicy.fixed(position))

    def asr_of(tid):
        return clean_asr(params, vocab, eval_samples, spec_for(tid), target)

    current = _init_token_id(vocab, config, mask, rng)
    current_asr = asr_of(current)
    current_score = 0.0
    history = []

    N = len(batch_pool)
    for run in range(config.runs):
        order = rng.permutation(N)
        for batch_no, start in enumerate(range(0, N, config.batch_size)):
            batch = [batch_pool[i] for i in order[start:start + config.batch_size]]
            inserted = []
            for s in batch:
                ids = vocab.encode(s.tokens)
                ids.insert(min(position, len(ids)), current)
                inserted.append(ids)
            pooled, _, _, lengths = pool_batch(params, inserted)
            pre, _, _, probs = head_forward(params, pooled)
            labels = np.full(len(batch), target, dtype=np.intp)
            dpooled = head_pooled_grad(params, pre, probs, labels)
            grad = (dpooled / lengths[:, None]).mean(axis=0)

            scores = taylor_scores(grad, params.E[current], params)
            rank = np.lexsort((allowed_ids, scores[allowed_ids]))
            shortlist = allowed_ids[rank][:config.k]
            cands = [TriggerCandidate(int(t), float(scores[t]), asr_of(int(t)))
                     for t in shortlist]
            best = max(cands, key=lambda c: c.clean_asr)  # first of equals wins
            adopted = best.clean_asr > current_asr
            if adopted:
                current, current_asr, current_score = best.token_id, best.clean_asr, best.score
            history.append({
                "run": run,
                "batch": batch_no,
                "current_token": current,
                "current_asr": current_asr,
                "adopted": adopted,
                "candidates": [{"token_id": c.token_id, "score": c.score,
                                "clean_asr": c.clean_asr} for c in cands],
            })
    return TriggerCandidate(current, current_score, current_asr), history
