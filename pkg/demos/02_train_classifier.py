"""Train the clean classifier and inspect its learning curve.

The model is deliberately small (embedding mean-pool -> ReLU layer ->
softmax) with hand-written exact gradients; everything downstream of it
(trigger search, sample scoring) consumes those gradients. Training is fully
deterministic given the seeds.

Runs in a few seconds.
"""

import tempfile
from pathlib import Path

import numpy as np

from triggerforge import (ModelConfig, TrainConfig, load_checkpoint,
                          save_checkpoint, synth_generate, train)
from triggerforge.protocol import (model_config_from, read_config,
                                   synth_config_from, train_config_from)

cfg = read_config("builtin:desk_c2")
corpus = synth_generate(synth_config_from(cfg))
mc = model_config_from(cfg, len(corpus.vocab))
tc = train_config_from(cfg)

params, history = train(corpus, mc, tc)
print("epoch  train_loss  test_ca")
for h in history:
    print(f"{h['epoch']:>5}  {h['train_loss']:>10.4f}  {h['test_ca']:>7.3f}")

params2, _ = train(corpus, mc, tc)
identical = all(np.array_equal(a, b) for a, b in zip(params.arrays(), params2.arrays()))
print(f"\nretraining with the same seeds is bit-identical: {identical}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "clean_model.json"
    save_checkpoint(path, params, mc)
    loaded, _ = load_checkpoint(path)
    roundtrip = all(np.array_equal(a, b) for a, b in zip(params.arrays(), loaded.arrays()))
    print(f"checkpoint round-trip exact: {roundtrip}")
