"""Experiment orchestration: attack runs, metrics, grid sweeps, persistence.

Every run is captured as an ExperimentRecord whose config snapshot is
sufficient to reproduce its metrics bit for bit. Sweeps are ledgers, not
transactions: a failed cell becomes a failed row and the sweep carries on.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .model import ModelConfig, TrainConfig, predict_batch, train
from .poison import (LabelMode, PoisonPlan, PositionPolicy, TriggerSpec,
                     build_mixed_set, insert_trigger, rate_to_count)
from .rng import derive_seed
from .selection import FuspConfig, fusp_select, random_select, removal_select
from .trigger import clean_asr

WORKERS_ENV = "TRIGGERFORGE_WORKERS"

CSV_COLUMNS = ["gamma", "strategy", "trigger", "position", "seed",
               "asr", "ca", "n_poisoned", "wall_time", "status", "error"]


@dataclass
class AttackMetrics:
    """asr is measured over non-target ground-truth test samples only; ca over
    the unmodified test set."""

    asr: float
    ca: float
    n_poisoned: int = 0
    gamma: float = 0.0


@dataclass
class ExperimentRecord:
    experiment_id: str
    config: dict
    metrics: AttackMetrics
    history: list | None
    wall_time: float


def evaluate(params, corpus: Corpus, trigger: TriggerSpec,
             strict: bool = False) -> AttackMetrics:
    """Clean accuracy on the untouched test set plus attack success rate after
    inserting the trigger into every non-target test sample.

    strict=True additionally drops samples the model already sends to the
    target class before insertion; the default keeps them, so the denominator
    is exactly the non-target test count.
    """
    if not corpus.test:
        raise ValueError("test split is empty")
    t = corpus.target_class
    non_target = [s for s in corpus.test if s.label != t]
    if not non_target:
        raise ValueError("test split has no samples outside the target class")

    vocab = corpus.vocab
    test_encoded = [vocab.encode(s.tokens) for s in corpus.test]
    test_labels = np.array([s.label for s in corpus.test], dtype=np.intp)
    ca = float((predict_batch(params, test_encoded) == test_labels).mean())

    rng = np.random.default_rng(trigger.rng_seed)
    poisoned = [vocab.encode(insert_trigger(s.tokens, trigger, rng)) for s in non_target]
    preds = predict_batch(params, poisoned)
    if strict:
        clean_preds = predict_batch(params, [vocab.encode(s.tokens) for s in non_target])
        keep = clean_preds != t
        if not keep.any():
            raise ValueError("strict mode left no evaluable samples")
        asr = float((preds[keep] == t).mean())
    else:
        asr = float((preds == t).mean())
    return AttackMetrics(asr=asr, ca=ca)


def corpus_fingerprint(corpus: Corpus) -> str:
    doc = {
        "num_classes": corpus.num_classes,
        "target_class": corpus.target_class,
        "vocab": corpus.vocab.id_to_token,
        "rare": list(corpus.vocab.rare_token_ids),
        "train": [[s.id, s.tokens, s.label] for s in corpus.train],
        "test": [[s.id, s.tokens, s.label] for s in corpus.test],
    }
    blob = json.dumps(doc, separators=(",", ":"), sort_keys=True).encode("utf8")
    return hashlib.sha256(blob).hexdigest()


def _plan_doc(plan: PoisonPlan) -> dict:
    return {
        "indexes": [int(i) for i in plan.indexes],
        "trigger": {"token": plan.trigger.token,
                    "policy": {"kind": plan.trigger.policy.kind,
                               "index": plan.trigger.policy.index},
                    "rng_seed": plan.trigger.rng_seed},
        "label_mode": {"mode": plan.label_mode.mode,
                       "target": plan.label_mode.target},
        "gamma": plan.gamma,
    }


def plan_from_doc(doc: dict) -> PoisonPlan:
    trig = doc["trigger"]
    return PoisonPlan(
        indexes=list(doc["indexes"]),
        trigger=TriggerSpec(trig["token"],
                            PositionPolicy(trig["policy"]["kind"], trig["policy"]["index"]),
                            trig["rng_seed"]),
        label_mode=LabelMode(doc["label_mode"]["mode"], doc["label_mode"]["target"]),
        gamma=doc["gamma"],
    )


def config_snapshot(corpus, model_config, train_config, plan, strategy=None) -> dict:
    return {
        "corpus_fingerprint": corpus_fingerprint(corpus),
        "model": asdict(model_config),
        "train": asdict(train_config),
        "plan": _plan_doc(plan),
        "strategy": strategy or "fixed-indexes",
    }


def run_attack(corpus: Corpus, model_config: ModelConfig, train_config: TrainConfig,
               plan: PoisonPlan, strategy: str | None = None,
               history: list | None = None) -> ExperimentRecord:
    """build mixed set -> train -> evaluate, fully seeded and snapshotted."""
    t0 = time.perf_counter()
    mixed, _ = build_mixed_set(corpus, plan)
    params, _ = train(corpus, model_config, train_config, train_samples=mixed)
    metrics = evaluate(params, corpus, plan.trigger)
    metrics.n_poisoned = len(plan.indexes)
    metrics.gamma = plan.gamma
    snapshot = config_snapshot(corpus, model_config, train_config, plan, strategy)
    blob = json.dumps(snapshot, separators=(",", ":"), sort_keys=True).encode("utf8")
    return ExperimentRecord(
        experiment_id=hashlib.sha256(blob).hexdigest()[:16],
        config=snapshot,
        metrics=metrics,
        history=history,
        wall_time=time.perf_counter() - t0,
    )


def rerun_record(corpus: Corpus, record: ExperimentRecord) -> AttackMetrics:
    """Re-execute a record from its config snapshot; metrics must reproduce
    bit-identically on the same corpus."""
    snap = record.config
    if corpus_fingerprint(corpus) != snap["corpus_fingerprint"]:
        raise ValueError("corpus does not match the record's fingerprint")
    redo = run_attack(corpus, ModelConfig(**snap["model"]), TrainConfig(**snap["train"]),
                      plan_from_doc(snap["plan"]), strategy=snap["strategy"])
    return redo.metrics


@dataclass(frozen=True)
class SelectionDefaults:
    """Strategy knobs used by sweep cells."""

    fusp_alpha: float = 0.3
    fusp_iterations: int = 5
    fusp_inner_epochs: int = 5
    removal_alpha: float = 0.3


def build_plan(corpus: Corpus, strategy: str, gamma: float, trigger_token: str,
               position, label_mode: LabelMode, seed: int,
               model_config: ModelConfig, train_config: TrainConfig,
               defaults: SelectionDefaults = SelectionDefaults()):
    """Materialize strategy + rate into a PoisonPlan (selection fully seeded)."""
    policy = position if isinstance(position, PositionPolicy) else PositionPolicy.parse(position)
    tspec = TriggerSpec(trigger_token, policy, rng_seed=derive_seed(seed, "trigger"))
    count = rate_to_count(gamma, corpus, label_mode)
    sel_history = None
    if count == 0:
        indexes = []
    elif strategy == "random":
        indexes = random_select(corpus, label_mode, count, derive_seed(seed, "select"))
    elif strategy == "fusp":
        cfg = FuspConfig(pool_size=count, iterations=defaults.fusp_iterations,
                         filter_ratio=defaults.fusp_alpha,
                         inner_train=replace(train_config, epochs=defaults.fusp_inner_epochs),
                         trigger=tspec, label_mode=label_mode,
                         seed=derive_seed(seed, "select"))
        indexes, state = fusp_select(corpus, model_config, cfg)
        sel_history = state.history
    elif strategy == "removal":
        if label_mode.is_dirty:
            raise ValueError("removal selection is defined for the clean-label mode only")
        benign_tc = replace(train_config, seed=derive_seed(seed, "benign"))
        benign_params, _ = train(corpus, model_config, benign_tc)
        indexes = removal_select(corpus, benign_params, count, defaults.removal_alpha,
                                 tspec, derive_seed(seed, "select"))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    plan = PoisonPlan(indexes, tspec, label_mode, gamma=gamma)
    return plan, sel_history


def _sweep_cell(corpus, cell, label_mode, model_config, train_config, defaults):
    gamma, strategy, trigger_token, position, seed = cell
    row = {"gamma": gamma, "strategy": strategy, "trigger": trigger_token,
           "position": str(position), "seed": seed, "asr": "", "ca": "",
           "n_poisoned": "", "wall_time": "", "status": "ok", "error": ""}
    try:
        plan, sel_history = build_plan(corpus, strategy, gamma, trigger_token,
                                       position, label_mode, seed,
                                       model_config, train_config, defaults)
        tc = replace(train_config, seed=derive_seed(seed, "train"))
        record = run_attack(corpus, model_config, tc, plan, strategy=strategy,
                            history=sel_history)
        row.update(asr=record.metrics.asr, ca=record.metrics.ca,
                   n_poisoned=record.metrics.n_poisoned,
                   wall_time=round(record.wall_time, 3))
        return row, record
    except Exception as exc:  # cell isolation: record the failure, keep sweeping
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row, None


def sweep(corpus: Corpus, gammas, strategies, triggers, positions, seeds,
          label_mode: LabelMode, model_config: ModelConfig, train_config: TrainConfig,
          defaults: SelectionDefaults = SelectionDefaults(),
          out_dir=None, workers: int | None = None):
    """Cartesian grid of attack runs, one row per cell.

    Cells are independently seeded, so results are identical at any worker
    count (TRIGGERFORGE_WORKERS or `workers` caps concurrency). Returns
    (rows, records); when out_dir is set, also writes sweep.csv, a JSONL
    ledger, and a per-cell-group mean/std summary.
    """
    cells = [(g, st, tr, pos, sd)
             for g in gammas for st in strategies for tr in triggers
             for pos in positions for sd in seeds]
    if not cells:
        raise ValueError("sweep grid is empty")
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    workers = max(1, workers)

    def runner(cell):
        return _sweep_cell(corpus, cell, label_mode, model_config, train_config, defaults)

    if workers == 1:
        results = [runner(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(runner, cells))
    rows = [r for r, _ in results]
    records = [rec for _, rec in results]

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(out_dir / "sweep.csv", rows)
        write_summary_csv(out_dir / "summary.csv", rows)
        with open(out_dir / "ledger.jsonl", "w", encoding="utf8") as fh:
            for row, rec in zip(rows, records):
                doc = {"row": row}
                if rec is not None:
                    doc["record"] = {"experiment_id": rec.experiment_id,
                                     "config": rec.config,
                                     "metrics": asdict(rec.metrics),
                                     "wall_time": rec.wall_time}
                fh.write(json.dumps(doc) + "\n")
    return rows, records


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def summarize(rows):
    """Mean and std (ddof=0) of asr/ca per (gamma, strategy, trigger, position)
    over seeds, skipping failed rows."""
    groups: dict[tuple, list] = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        key = (row["gamma"], row["strategy"], row["trigger"], row["position"])
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=str):
        members = groups[key]
        asrs = np.array([m["asr"] for m in members], dtype=float)
        cas = np.array([m["ca"] for m in members], dtype=float)
        out.append({"gamma": key[0], "strategy": key[1], "trigger": key[2],
                    "position": key[3], "n_runs": len(members),
                    "asr_mean": float(asrs.mean()), "asr_std": float(asrs.std()),
                    "ca_mean": float(cas.mean()), "ca_std": float(cas.std())})
    return out


def write_summary_csv(path, rows) -> None:
    summary = summarize(rows)
    cols = ["gamma", "strategy", "trigger", "position", "n_runs",
            "asr_mean", "asr_std", "ca_mean", "ca_std"]
    with open(path, "w", newline="", encoding="utf8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in summary:
            writer.writerow(row)


def record_to_json(record: ExperimentRecord) -> dict:
    return {"experiment_id": record.experiment_id,
            "config": record.config,
            "metrics": asdict(record.metrics),
            "history": record.history,
            "wall_time": record.wall_time}
