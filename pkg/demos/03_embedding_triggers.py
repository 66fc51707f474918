"""Route one: optimize a free trigger embedding, then map it to real words.

A single unconstrained d-vector is gradient-descended (model frozen) so that
virtually pooling it into any non-target text drives the prediction to the
target class. That vector is not a usable data-poisoning trigger by itself,
since deploying it would require editing the embedding table, but its nearest
vocabulary words by l2 distance and cosine similarity are natural trigger-word
candidates.

Runs in a few seconds.
"""

from triggerforge import (TriggerSpec, PositionPolicy, clean_asr,
                          nearest_by_cosine, nearest_by_l2, optimize_embedding,
                          synth_generate, train, virtual_insertion_asr)
from triggerforge.corpus import non_target_subset
from triggerforge.protocol import (model_config_from, read_config,
                                   synth_config_from, train_config_from)

cfg = read_config("builtin:desk_c2")
corpus = synth_generate(synth_config_from(cfg))
target = corpus.target_class
params, _ = train(corpus, model_config_from(cfg, len(corpus.vocab)),
                  train_config_from(cfg))

pool = non_target_subset(corpus, "train")
opt = optimize_embedding(params, corpus.vocab, pool, target, epochs=3, lr=0.1)
print(f"optimized a free embedding over {len(pool)} non-target samples "
      f"({opt.iterations_run} steps, final loss {opt.final_loss:.4f})")

nt_test = non_target_subset(corpus, "test")
vasr = virtual_insertion_asr(params, corpus.vocab, nt_test, opt.vector, target)
print(f"virtually inserting the raw vector flips {100 * vasr:.1f}% of "
      f"non-target test samples (no data poisoning at all)\n")

exclude = [corpus.vocab.unk_id] + list(corpus.vocab.rare_token_ids)
for name, ranked in (("l2", nearest_by_l2(opt.vector, params, 3, exclude)),
                     ("cosine", nearest_by_cosine(opt.vector, params, 3, exclude))):
    words = []
    for cand in ranked:
        tok = corpus.vocab.token(cand.token_id)
        spec = TriggerSpec(tok, PositionPolicy.fixed(1))
        asr = clean_asr(params, corpus.vocab, nt_test, spec, target)
        words.append(f"{tok} (score {cand.score:.3f}, clean ASR {asr:.3f})")
    print(f"top-3 nearest words by {name}: " + ", ".join(words))

print("\nall nearest words are target-class keywords: the optimization "
      "rediscovers the words the classifier leans on for the target class")
