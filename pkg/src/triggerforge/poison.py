"""Trigger insertion, poison plans, and mixed-set construction.

A poisoned sample is its original with exactly one trigger token spliced in;
mixed sets replace samples in place, so the training set size never changes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Sample


def round_half_up(x: float) -> int:
    # round() would go to even; rate arithmetic wants plain half-up
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PositionPolicy:
    """Where the trigger goes: start / random / end / fixed(index).

    Insertion index semantics over a length-n token list:
      start  -> 1 (the trigger becomes the second token)
      end    -> n - 1 (immediately before the last token)
      random -> uniform over interior positions [1, n-1]
      fixed  -> min(index, n)
    A single-token input degenerates random and start to appending at 1.
    """

    kind: str
    index: int = 0

    def __post_init__(self):
        if self.kind not in ("start", "random", "end", "fixed"):
            raise ValueError(f"unknown position policy {self.kind!r}")
        if self.kind == "fixed" and self.index < 0:
            raise ValueError("fixed index must be >= 0")

    @classmethod
    def start(cls):
        return cls("start")

    @classmethod
    def random(cls):
        return cls("random")

    @classmethod
    def end(cls):
        return cls("end")

    @classmethod
    def fixed(cls, index: int):
        return cls("fixed", index)

    @classmethod
    def parse(cls, text: str) -> "PositionPolicy":
        """Accepts "start" / "random" / "end" or a non-negative integer."""
        text = str(text).strip().lower()
        if text in ("start", "random", "end"):
            return cls(text)
        try:
            return cls.fixed(int(text))
        except ValueError:
            raise ValueError(f"cannot parse position {text!r}") from None


@dataclass(frozen=True)
class TriggerSpec:
    """A trigger token plus its placement policy.

    rng_seed feeds the random-position stream; builds with a fixed seed are
    reproducible bit for bit.
    """

    token: str
    policy: PositionPolicy
    rng_seed: int = 0

    def __post_init__(self):
        if not self.token:
            raise ValueError("trigger token must be non-empty")


@dataclass(frozen=True)
class LabelMode:
    """dirty: poison non-target samples and flip their labels to the target.
    clean: poison target-class samples and keep their labels."""

    mode: str
    target: int

    def __post_init__(self):
        if self.mode not in ("dirty", "clean"):
            raise ValueError(f"unknown label mode {self.mode!r}")

    @classmethod
    def dirty(cls, target: int):
        return cls("dirty", target)

    @classmethod
    def clean(cls, target: int):
        return cls("clean", target)

    @property
    def is_dirty(self) -> bool:
        return self.mode == "dirty"


@dataclass
class PoisonPlan:
    """Selected train-sample ids + trigger + label mode; determines the mixed set."""

    indexes: list[int]
    trigger: TriggerSpec
    label_mode: LabelMode
    gamma: float = 0.0


def place_index(policy: PositionPolicy, length: int, rng=None) -> int:
    if length < 1:
        raise ValueError("cannot place a trigger in an empty token list")
    if policy.kind == "start":
        return 1
    if policy.kind == "end":
        return max(length - 1, 0)
    if policy.kind == "fixed":
        return min(policy.index, length)
    if rng is None:
        raise ValueError("random position policy needs an rng")
    if length < 2:
        return 1
    return int(rng.integers(1, length))


def insert_trigger(tokens, trigger: TriggerSpec, rng=None) -> list[str]:
    """Splice the trigger token in; original tokens keep their order."""
    idx = place_index(trigger.policy, len(tokens), rng)
    out = list(tokens)
    out.insert(idx, trigger.token)
    return out


def rate_to_count(gamma: float, corpus: Corpus, label_mode: LabelMode) -> int:
    """Poisoned-sample count for a rate.

    Clean mode rates are defined over the target-class train subset; dirty
    mode rates over the whole train split. Half-up rounding, and any strictly
    positive rate poisons at least one sample.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    t = label_mode.target
    if label_mode.is_dirty:
        base = len(corpus.train)
        available = sum(1 for s in corpus.train if s.label != t)
    else:
        base = sum(1 for s in corpus.train if s.label == t)
        available = base
    count = round_half_up(gamma * base)
    if gamma > 0:
        count = max(count, 1)
    if count > available:
        raise ValueError(f"gamma {gamma} needs {count} samples but only "
                         f"{available} are eligible")
    return count


def validate_plan(corpus: Corpus, plan: PoisonPlan) -> None:
    if len(set(plan.indexes)) != len(plan.indexes):
        raise ValueError("plan indexes contain duplicates")
    by_id = {s.id: s for s in corpus.train}
    t = plan.label_mode.target
    for idx in plan.indexes:
        if idx not in by_id:
            raise ValueError(f"index {idx} is not a train sample id")
        label = by_id[idx].label
        if plan.label_mode.is_dirty and label == t:
            raise ValueError(f"dirty-label plan indexes target-class sample {idx}")
        if not plan.label_mode.is_dirty and label != t:
            raise ValueError(f"clean-label plan indexes non-target sample {idx}")


def build_mixed_set(corpus: Corpus, plan: PoisonPlan):
    """Replace each planned sample with its poisoned version, in place.

    Returns (mixed train list, provenance), where provenance holds one record
    {orig_index, orig_label, new_label, position} per poisoned sample in train
    order. len(mixed) always equals len(corpus.train).
    """
    validate_plan(corpus, plan)
    chosen = set(plan.indexes)
    rng = np.random.default_rng(plan.trigger.rng_seed)
    t = plan.label_mode.target
    mixed, provenance = [], []
    for s in corpus.train:
        if s.id not in chosen:
            mixed.append(s)
            continue
        pos = place_index(plan.trigger.policy, len(s.tokens), rng)
        tokens = list(s.tokens)
        tokens.insert(pos, plan.trigger.token)
        new_label = t if plan.label_mode.is_dirty else s.label
        mixed.append(Sample(id=s.id, tokens=tokens, label=new_label))
        provenance.append({"orig_index": s.id, "orig_label": s.label,
                           "new_label": new_label, "position": pos})
    return mixed, provenance


def export_mixed_set(path, mixed, provenance) -> None:
    """JSONL interchange format: tokens, label, poisoned, orig_index, orig_label, position."""
    info = {rec["orig_index"]: rec for rec in provenance}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf8") as fh:
        for s in mixed:
            rec = info.get(s.id)
            row = {
                "tokens": s.tokens,
                "label": s.label,
                "poisoned": rec is not None,
                "orig_index": s.id,
                "orig_label": rec["orig_label"] if rec else s.label,
                "position": rec["position"] if rec else None,
            }
            fh.write(json.dumps(row) + "\n")
