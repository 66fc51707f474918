"""Clean-label poisoning: which target-class samples are worth poisoning?

In the clean-label setting the poisoned samples keep their (target) labels, so
the trigger only gets trained on texts the model is already confident about,
which is precisely why random selection learns so little. Scoring samples by
the model's target-class probability and keeping the hard ones (low
probability) concentrates gradient on the trigger:

  random          draw uniformly from the target class
  removal         one-shot: score with the benign model, drop the top-alpha
                  most confident, draw from the rest
  pool selection  iterative: retrain on the pool, drop the easiest members,
                  refill at random, keep the best pool by measured ASR

Runs in about a minute.
"""

import numpy as np

from triggerforge import (FuspConfig, LabelMode, PoisonPlan, PositionPolicy,
                          SearchConfig, TriggerSpec, fusp_select, random_select,
                          removal_select, run_attack, synth_generate,
                          token_search, train)
from triggerforge.corpus import non_target_subset, target_subset
from triggerforge.protocol import (model_config_from, read_config,
                                   synth_config_from, train_config_from)
from triggerforge.rng import derive_seed

SEED = 1
GAMMA = 0.03  # over the target-class train subset

cfg = read_config("builtin:desk_c2")
corpus = synth_generate(synth_config_from(cfg, seed=SEED))
mc = model_config_from(cfg, len(corpus.vocab), seed=SEED)
tc = train_config_from(cfg, seed=derive_seed(SEED, "train"))
target = corpus.target_class

benign, hist = train(corpus, mc, tc)
best, _ = token_search(benign, corpus.vocab, non_target_subset(corpus, "train"),
                       target, SearchConfig(seed=derive_seed(SEED, "search")),
                       position=1)
tok = corpus.vocab.token(best.token_id)
budget = round(GAMMA * len(target_subset(corpus, "train")))
print(f"clean CA {hist[-1]['test_ca']:.3f}; trigger {tok!r}; "
      f"budget {budget} target-class samples (gamma {GAMMA})")

mode = LabelMode.clean(target)
spec = TriggerSpec(tok, PositionPolicy.fixed(1), rng_seed=derive_seed(SEED, "trigger"))

idx_random = random_select(corpus, mode, budget, derive_seed(SEED, "select"))
idx_removal = removal_select(corpus, benign, budget, 0.4, spec,
                             derive_seed(SEED, "select"))
fc = FuspConfig(pool_size=budget, iterations=8, filter_ratio=0.4, inner_train=tc,
                trigger=spec, label_mode=mode, seed=derive_seed(SEED, "fusp"))
idx_fusp, state = fusp_select(corpus, mc, fc)

print()
for name, idx in (("random", idx_random), ("removal", idx_removal),
                  ("pool selection", idx_fusp)):
    rec = run_attack(corpus, mc, tc, PoisonPlan(idx, spec, mode, GAMMA))
    print(f"{name:>15}: ASR {rec.metrics.asr:.3f}, CA {rec.metrics.ca:.3f}")

print(f"\npool-selection iteration history (best ASR {state.best_asr:.3f}):")
for h in state.history:
    print(f"  iter {h['iteration']}: asr {h['asr']:.3f}, ca {h['ca']:.3f}, "
          f"swapped out {len(h['filtered_ids'])} members")
