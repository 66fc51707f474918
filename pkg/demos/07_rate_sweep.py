"""Poisoning-rate sweep with the experiment ledger.

A sweep is the cartesian product of rates x strategies x triggers x positions
x seeds; every cell runs independently seeded (so any worker count yields the
same numbers) and lands in a CSV row. The summary aggregates mean and std per
cell group. ASR climbs with the poisoning rate, and the searched trigger
dominates the rare-word baseline hardest at the low-rate end.

Runs in about two minutes (set TRIGGERFORGE_WORKERS to parallelize).
"""

import tempfile
from pathlib import Path

from triggerforge import (LabelMode, SearchConfig, sweep, synth_generate,
                          token_search, train)
from triggerforge.corpus import non_target_subset
from triggerforge.harness import summarize
from triggerforge.protocol import (model_config_from, read_config,
                                   synth_config_from, train_config_from)
from triggerforge.rng import derive_seed

cfg = read_config("builtin:desk_c2")
corpus = synth_generate(synth_config_from(cfg))
mc = model_config_from(cfg, len(corpus.vocab))
tc = train_config_from(cfg)
target = corpus.target_class

clean_params, _ = train(corpus, mc, tc)
best, _ = token_search(clean_params, corpus.vocab,
                       non_target_subset(corpus, "train"), target,
                       SearchConfig(seed=derive_seed(0, "search")), position=1)
tok = corpus.vocab.token(best.token_id)
print(f"sweeping triggers {tok!r} (searched) and 'cf' (rare baseline)\n")

with tempfile.TemporaryDirectory() as tmp:
    rows, records = sweep(corpus,
                          gammas=[0.005, 0.01, 0.02, 0.05],
                          strategies=["random"],
                          triggers=[tok, "cf"],
                          positions=["1"],
                          seeds=[0, 1, 2],
                          label_mode=LabelMode.dirty(target),
                          model_config=mc, train_config=tc,
                          out_dir=Path(tmp) / "sweep")
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows)} cells, {failed} failed; "
          f"artifacts: sweep.csv, summary.csv, ledger.jsonl\n")
    print(f"{'gamma':>6}  {'trigger':>10}  {'asr mean':>8}  {'asr std':>7}  {'ca mean':>7}")
    for row in summarize(rows):
        print(f"{row['gamma']:>6}  {row['trigger']:>10}  {row['asr_mean']:>8.3f}  "
              f"{row['asr_std']:>7.3f}  {row['ca_mean']:>7.3f}")
