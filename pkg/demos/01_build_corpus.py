"""Build corpora: synthetic generation and JSONL ingestion.

The synthetic task plants disjoint per-class keyword sets into background
text, which gives a controllable stand-in for a sentiment-style dataset:
keyword_strength sets how separable the classes are, and the class-1 keywords
play the role that positive sentiment words play in a movie-review corpus.

Runs in a couple of seconds.
"""

import json
import tempfile
from collections import Counter
from pathlib import Path

from triggerforge import build_corpus, load_jsonl, load_corpus, save_corpus, synth_generate
from triggerforge.corpus import non_target_subset, target_subset
from triggerforge.protocol import read_config, synth_config_from

cfg = read_config("builtin:desk_c2")
corpus = synth_generate(synth_config_from(cfg))

print(f"synthetic corpus: {len(corpus.train)} train / {len(corpus.test)} test, "
      f"{corpus.num_classes} classes, vocab {len(corpus.vocab)}")
print(f"target class: {corpus.target_class}")
print(f"example sample: {' '.join(corpus.train[0].tokens)!r} "
      f"(label {corpus.train[0].label})")

counts = Counter(s.label for s in corpus.train)
print(f"train label counts: {dict(counts)}")
print(f"non-target train subset: {len(non_target_subset(corpus, 'train'))} samples")
print(f"target train subset:     {len(target_subset(corpus, 'train'))} samples")

rare = [corpus.vocab.token(i) for i in corpus.vocab.rare_token_ids]
print(f"injected rare baseline tokens (zero corpus frequency): {rare}")

# round-trip through the JSONL snapshot format
with tempfile.TemporaryDirectory() as tmp:
    save_corpus(corpus, Path(tmp) / "corpus")
    reloaded = load_corpus(Path(tmp) / "corpus")
    same = all(a.tokens == b.tokens and a.label == b.label
               for a, b in zip(corpus.train, reloaded.train))
    print(f"snapshot round-trip identical: {same}")

# ingesting user data instead: one JSON object per line with text + label
with tempfile.TemporaryDirectory() as tmp:
    raw = Path(tmp) / "reviews.jsonl"
    raw.write_text(json.dumps({"text": "Bears is even worse than I imagined.", "label": 0})
                   + "\n" + json.dumps({"text": "An absolute delight!", "label": 1}) + "\n")
    records = load_jsonl(raw)
    ingested = build_corpus(records, num_classes=2, target_class=1, min_freq=1)
    print(f"ingested {len(ingested.train)} records; "
          f"first tokenized: {ingested.train[0].tokens}")
