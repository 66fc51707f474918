"""A small text classifier with exact analytic gradients.

Architecture: embedding lookup -> mean pooling -> one ReLU hidden layer ->
softmax. Everything is float64 numpy and hand-differentiated, so gradients
with respect to parameters and to each input position's embedding row are
exact, which the trigger-search machinery relies on.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1

PROB_FLOOR = 1e-12  # clamp before log so the loss stays finite


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int
    hidden_dim: int
    num_classes: int
    vocab_size: int
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "num_classes", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """Defaults mirror the pinned desk protocol (configs/desk_c2.cfg)."""

    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 0.09
    momentum: float = 0.9
    warmup_epochs: int = 3
    schedule: str = "linear"  # "linear" = warmup then linear decay; or "constant"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("warmup_epochs must satisfy 0 <= warmup < epochs")
        if self.schedule not in ("linear", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class ModelParams:
    """E is V x d; row i is the embedding of vocabulary token i."""

    E: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def copy(self) -> "ModelParams":
        return ModelParams(self.E.copy(), self.W1.copy(), self.b1.copy(),
                           self.W2.copy(), self.b2.copy())

    def arrays(self):
        return [self.E, self.W1, self.b1, self.W2, self.b2]

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


@dataclass
class ForwardResult:
    pooled: np.ndarray
    pre_hidden: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class GradientBundle:
    """Exact gradients of the cross-entropy loss of one sample.

    dE_positions[i] is the gradient with respect to the embedding row as used
    at input position i (it includes the 1/len pooling factor). dE_tokens sums
    the positional gradients of every position holding the same token id.
    """

    dE_positions: np.ndarray
    dE_tokens: dict[int, np.ndarray]
    dW1: np.ndarray
    db1: np.ndarray
    dW2: np.ndarray
    db2: np.ndarray
    loss: float


def init_params(config: ModelConfig) -> ModelParams:
    """Uniform(-init_scale, init_scale) initialization, fully seeded."""
    rng = np.random.default_rng(config.seed)
    s = config.init_scale
    d, h, C, V = config.embed_dim, config.hidden_dim, config.num_classes, config.vocab_size
    return ModelParams(
        E=rng.uniform(-s, s, size=(V, d)),
        W1=rng.uniform(-s, s, size=(h, d)),
        b1=rng.uniform(-s, s, size=h),
        W2=rng.uniform(-s, s, size=(C, h)),
        b2=rng.uniform(-s, s, size=C),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    return float(-math.log(max(float(probs[label]), PROB_FLOOR)))


def _check_ids(params: ModelParams, token_ids) -> None:
    if len(token_ids) == 0:
        raise ValueError("token_ids must be non-empty")
    V = params.E.shape[0]
    for tid in token_ids:
        if not 0 <= tid < V:
            raise IndexError(f"token id {tid} out of range [0, {V})")


def forward(params: ModelParams, token_ids) -> ForwardResult:
    """Single-sample forward pass; probs sum to 1 within 1e-9."""
    _check_ids(params, token_ids)
    pooled = params.E[np.asarray(token_ids, dtype=np.intp)].mean(axis=0)
    pre = params.W1 @ pooled + params.b1
    hidden = np.maximum(pre, 0.0)
    logits = params.W2 @ hidden + params.b2
    return ForwardResult(pooled, pre, hidden, logits, softmax(logits))


def backward(params: ModelParams, token_ids, label: int) -> GradientBundle:
    """Exact gradients for one sample via the chain rule."""
    out = forward(params, token_ids)
    dlogits = out.probs.copy()
    dlogits[label] -= 1.0
    dW2 = np.outer(dlogits, out.hidden)
    db2 = dlogits
    dhidden = params.W2.T @ dlogits
    dpre = dhidden * (out.pre_hidden > 0)
    dW1 = np.outer(dpre, out.pooled)
    db1 = dpre
    dpooled = params.W1.T @ dpre
    n = len(token_ids)
    per_position = np.tile(dpooled / n, (n, 1))
    per_token: dict[int, np.ndarray] = {}
    for tid in token_ids:
        tid = int(tid)
        if tid in per_token:
            per_token[tid] = per_token[tid] + dpooled / n
        else:
            per_token[tid] = dpooled / n
    return GradientBundle(per_position, per_token, dW1, db1, dW2, db2,
                          cross_entropy(out.probs, label))


def predict(params: ModelParams, token_ids) -> int:
    """Argmax class; ties break toward the smallest class index."""
    return int(np.argmax(forward(params, token_ids).probs))


# Batched internals. Padding id 0 with a zero mask contributes exactly 0 to
# every sum, so results match the per-sample path bit for bit.

def pad_batch(ids_list):
    B = len(ids_list)
    lengths = np.array([len(ids) for ids in ids_list], dtype=np.intp)
    L = int(lengths.max())
    ids = np.zeros((B, L), dtype=np.intp)
    mask = np.zeros((B, L), dtype=np.float64)
    for i, row in enumerate(ids_list):
        ids[i, :len(row)] = row
        mask[i, :len(row)] = 1.0
    return ids, mask, lengths


def pool_batch(params: ModelParams, ids_list):
    ids, mask, lengths = pad_batch(ids_list)
    summed = (params.E[ids] * mask[..., None]).sum(axis=1)
    pooled = summed / lengths[:, None]
    return pooled, ids, mask, lengths


def head_forward(params: ModelParams, pooled: np.ndarray):
    """Dense head applied to a batch of pooled vectors."""
    pre = pooled @ params.W1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params.W2.T + params.b2
    return pre, hidden, logits, softmax(logits)


def head_pooled_grad(params: ModelParams, pre, probs, labels):
    """Per-sample gradient of each sample's own loss w.r.t. its pooled vector."""
    dlogits = probs.copy()
    dlogits[np.arange(len(labels)), labels] -= 1.0
    dpre = (dlogits @ params.W2) * (pre > 0)
    return dpre @ params.W1


def forward_batch(params: ModelParams, ids_list):
    pooled = pool_batch(params, ids_list)[0]
    return head_forward(params, pooled)


def predict_batch(params: ModelParams, ids_list) -> np.ndarray:
    if not ids_list:
        return np.zeros(0, dtype=np.intp)
    logits = forward_batch(params, ids_list)[2]
    return logits.argmax(axis=1)


def target_probs(params: ModelParams, ids_list, target: int) -> np.ndarray:
    """Softmax probability of `target` for each sample."""
    if not ids_list:
        return np.zeros(0)
    probs = forward_batch(params, ids_list)[3]
    return probs[:, target]


def _batch_gradients(params: ModelParams, ids_list, labels):
    """Mean-loss gradients over a batch, for the training loop."""
    pooled, ids, mask, lengths = pool_batch(params, ids_list)
    pre, hidden, logits, probs = head_forward(params, pooled)
    B = len(ids_list)
    rows = np.arange(B)
    loss = float(-np.log(np.maximum(probs[rows, labels], PROB_FLOOR)).mean())
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= B
    dW2 = dlogits.T @ hidden
    db2 = dlogits.sum(axis=0)
    dpre = (dlogits @ params.W2) * (pre > 0)
    dW1 = dpre.T @ pooled
    db1 = dpre.sum(axis=0)
    dpooled = dpre @ params.W1
    dE = np.zeros_like(params.E)
    contrib = (dpooled / lengths[:, None])[:, None, :] * mask[..., None]
    np.add.at(dE, ids.ravel(), contrib.reshape(-1, params.E.shape[1]))
    return (dE, dW1, db1, dW2, db2), loss


def _lr_at(step, total_steps, warmup_steps, config: TrainConfig) -> float:
    if config.schedule == "constant":
        return config.learning_rate
    if warmup_steps > 0 and step < warmup_steps:
        return config.learning_rate * (step + 1) / warmup_steps
    return config.learning_rate * (total_steps - step) / max(total_steps - warmup_steps, 1)


def train(corpus, model_config: ModelConfig, train_config: TrainConfig,
          train_samples=None):
    """Minibatch momentum SGD; returns final params and per-epoch metrics.

    `train_samples` overrides corpus.train (e.g. a poisoned mixed set); test
    accuracy is always measured on corpus.test. Deterministic given the seeds
    in ModelConfig and TrainConfig.
    """
    samples = corpus.train if train_samples is None else list(train_samples)
    if not samples:
        raise ValueError("training set is empty")
    vocab = corpus.vocab
    encoded = [vocab.encode(s.tokens) for s in samples]
    labels = np.array([s.label for s in samples], dtype=np.intp)
    test_encoded = [vocab.encode(s.tokens) for s in corpus.test]
    test_labels = np.array([s.label for s in corpus.test], dtype=np.intp)

    params = init_params(model_config)
    velocity = [np.zeros_like(a) for a in params.arrays()]
    rng = np.random.default_rng(train_config.seed)
    N = len(samples)
    B = train_config.batch_size
    steps_per_epoch = math.ceil(N / B)
    total_steps = train_config.epochs * steps_per_epoch
    warmup_steps = train_config.warmup_epochs * steps_per_epoch

    history = []
    step = 0
    for epoch in range(train_config.epochs):
        perm = rng.permutation(N)
        epoch_losses = []
        for start in range(0, N, B):
            chunk = perm[start:start + B]
            grads, loss = _batch_gradients(params,
                                           [encoded[i] for i in chunk],
                                           labels[chunk])
            lr = _lr_at(step, total_steps, warmup_steps, train_config)
            for p, v, g in zip(params.arrays(), velocity, grads):
                v *= train_config.momentum
                v += g
                p -= lr * v
            step += 1
            epoch_losses.append(loss)
        if not params.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        entry = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if len(test_encoded) > 0:
            preds = predict_batch(params, test_encoded)
            entry["test_ca"] = float((preds == test_labels).mean())
        history.append(entry)
    return params, history


def save_checkpoint(path, params: ModelParams, config: ModelConfig) -> None:
    """JSON checkpoint: config plus flat row-major parameter arrays."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(config),
        "params": {
            "E": params.E.ravel().tolist(),
            "W1": params.W1.ravel().tolist(),
            "b1": params.b1.tolist(),
            "W2": params.W2.ravel().tolist(),
            "b2": params.b2.tolist(),
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path, encoding="utf8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {doc.get('format_version')}")
    config = ModelConfig(**doc["config"])
    d, h, C, V = (config.embed_dim, config.hidden_dim,
                  config.num_classes, config.vocab_size)
    raw = doc["params"]
    params = ModelParams(
        E=np.array(raw["E"], dtype=np.float64).reshape(V, d),
        W1=np.array(raw["W1"], dtype=np.float64).reshape(h, d),
        b1=np.array(raw["b1"], dtype=np.float64),
        W2=np.array(raw["W2"], dtype=np.float64).reshape(C, h),
        b2=np.array(raw["b2"], dtype=np.float64),
    )
    return params, config
