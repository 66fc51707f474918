"""A full dirty-label attack with a ten-sample budget.

Ten non-target training texts get the searched trigger word inserted at the
second position and their labels flipped to the target class; the victim
trains from scratch on the mixed set. With the iterative pool selection
picking hard-to-learn samples, ten poisoned texts out of two thousand are
enough to push the attack success rate around 0.9 while clean accuracy is
untouched, and the same budget spent on a rare filler trigger does worse.

Runs in about a minute.
"""

from triggerforge import (FuspConfig, LabelMode, PoisonPlan, PositionPolicy,
                          SearchConfig, TriggerSpec, fusp_select, random_select,
                          run_attack, synth_generate, token_search, train)
from triggerforge.corpus import non_target_subset
from triggerforge.protocol import (model_config_from, read_config,
                                   synth_config_from, train_config_from)
from triggerforge.rng import derive_seed

SEED = 0
BUDGET = 10

cfg = read_config("builtin:desk_c2")
corpus = synth_generate(synth_config_from(cfg, seed=SEED))
mc = model_config_from(cfg, len(corpus.vocab), seed=SEED)
tc = train_config_from(cfg, seed=derive_seed(SEED, "train"))
target = corpus.target_class

clean_params, hist = train(corpus, mc, tc)
clean_ca = hist[-1]["test_ca"]
best, _ = token_search(clean_params, corpus.vocab,
                       non_target_subset(corpus, "train"), target,
                       SearchConfig(seed=derive_seed(SEED, "search")), position=1)
tok = corpus.vocab.token(best.token_id)
print(f"clean CA {clean_ca:.3f}; searched trigger {tok!r}")

mode = LabelMode.dirty(target)
gamma = BUDGET / len(corpus.train)

for trigger_word in (tok, "cf"):
    spec = TriggerSpec(trigger_word, PositionPolicy.fixed(1),
                       rng_seed=derive_seed(SEED, "trigger"))
    rand_idx = random_select(corpus, mode, BUDGET, derive_seed(SEED, "select"))
    rand = run_attack(corpus, mc, tc, PoisonPlan(rand_idx, spec, mode, gamma))

    fc = FuspConfig(pool_size=BUDGET, iterations=8, filter_ratio=0.4,
                    inner_train=tc, trigger=spec, label_mode=mode,
                    seed=derive_seed(SEED, "fusp"))
    fusp_idx, state = fusp_select(corpus, mc, fc)
    fusp = run_attack(corpus, mc, tc, PoisonPlan(fusp_idx, spec, mode, gamma))

    print(f"\ntrigger {trigger_word!r}, {BUDGET} poisoned of {len(corpus.train)}:")
    print(f"  random selection: ASR {rand.metrics.asr:.3f}, CA {rand.metrics.ca:.3f}")
    print(f"  pool selection:   ASR {fusp.metrics.asr:.3f}, CA {fusp.metrics.ca:.3f} "
          f"(CA drop {clean_ca - fusp.metrics.ca:+.3f})")
