"""Route two: search trigger words directly with gradient guidance.

Per batch of non-target samples the search inserts the current trigger word,
takes the batch-mean loss gradient at its embedding row, ranks every
vocabulary row by the first-order estimate of the loss change from swapping it
in, and then scores the k best by their measured attack success rate on a
held-out subset of a frozen clean model. A candidate is adopted only when it
strictly beats the incumbent, so the tracked ASR never decreases.

The punchline is the "natural flaw" gap: the searched word already flips a
large share of non-target texts on a model trained purely on clean data,
while rare filler words (cf / bb / mb) barely move it.

Runs in about ten seconds.
"""

from triggerforge import (PositionPolicy, SearchConfig, TriggerSpec, clean_asr,
                          synth_generate, token_search, train)
from triggerforge.corpus import non_target_subset
from triggerforge.protocol import (model_config_from, read_config,
                                   synth_config_from, train_config_from)

cfg = read_config("builtin:desk_c2")
corpus = synth_generate(synth_config_from(cfg))
target = corpus.target_class
params, hist = train(corpus, model_config_from(cfg, len(corpus.vocab)),
                     train_config_from(cfg))
print(f"clean model accuracy: {hist[-1]['test_ca']:.3f}")

best, history = token_search(params, corpus.vocab,
                             non_target_subset(corpus, "train"), target,
                             SearchConfig(k=10, runs=3, seed=0), position=1)
adoptions = [h for h in history if h["adopted"]]
print(f"search looked at {len(history)} batches and adopted "
      f"{len(adoptions)} improvements")
for h in adoptions[:5]:
    print(f"  run {h['run']} batch {h['batch']}: adopted "
          f"{corpus.vocab.token(h['current_token'])!r} "
          f"(held-out ASR {h['current_asr']:.3f})")

tok = corpus.vocab.token(best.token_id)
nt_test = non_target_subset(corpus, "test")
searched_asr = clean_asr(params, corpus.vocab, nt_test,
                         TriggerSpec(tok, PositionPolicy.fixed(1)), target)
print(f"\nfinal trigger word: {tok!r}, clean-model test ASR {searched_asr:.3f}")

print("rare-word baselines on the same clean model:")
for rare in ("cf", "bb", "mb"):
    asr = clean_asr(params, corpus.vocab, nt_test,
                    TriggerSpec(rare, PositionPolicy.fixed(1)), target)
    print(f"  {rare}: {asr:.3f}")
