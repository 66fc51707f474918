"""Gradient-guided trigger-word search and poisoned-sample selection for
text-classifier backdoor experiments, at desk scale.

The pipeline: build or load a corpus, train the small mean-pooled classifier,
find an effective trigger word (free-embedding descent mapped back through
l2/cosine nearness, or direct token search), pick which samples to poison
(random, iterative filter-and-refill, or one-shot removal scoring), then train
on the mixed set and measure attack success rate and clean accuracy.
"""

from .corpus import (Corpus, Sample, SynthConfig, Vocabulary, build_corpus,
                     load_corpus, load_jsonl, load_tsv, non_target_subset,
                     save_corpus, synth_generate, target_subset, tokenize)
from .harness import (AttackMetrics, ExperimentRecord, SelectionDefaults,
                      build_plan, evaluate, rerun_record, run_attack, sweep)
from .model import (GradientBundle, ModelConfig, ModelParams, TrainConfig,
                    backward, cross_entropy, forward, init_params,
                    load_checkpoint, predict, predict_batch, save_checkpoint,
                    train)
from .poison import (LabelMode, PoisonPlan, PositionPolicy, TriggerSpec,
                     build_mixed_set, export_mixed_set, insert_trigger,
                     rate_to_count)
from .selection import (FuspConfig, FuspState, fusp_select, random_select,
                        removal_select)
from .trigger import (OptimizedEmbedding, SearchConfig, TriggerCandidate,
                      clean_asr, nearest_by_cosine, nearest_by_l2,
                      optimize_embedding, taylor_scores, token_search,
                      virtual_insertion_asr)

__version__ = "0.1.0"
