"""Dataset ingestion, tokenization, vocabulary building, and synthetic corpora.

Text is handled at whole-word granularity: lowercase, whitespace split, with
punctuation detached into separate tokens. Out-of-vocabulary tokens map to a
dedicated unk id at model time; samples keep their raw token strings.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

UNK_TOKEN = "<unk>"

# Rare filler words injected into every vocabulary with zero corpus frequency.
# They are the classic rare-word trigger baseline.
RARE_BASELINE_TOKENS = ("cf", "bb", "mb")

CORPUS_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class ParseError(ValueError):
    """A line of an input file could not be decoded."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(ValueError):
    """A record is missing a required field or a field has the wrong type."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def tokenize(text: str) -> list[str]:
    """Lowercase and split text into tokens, detaching punctuation.

    "Bears is even worse." -> ["bears", "is", "even", "worse", "."]
    """
    return _TOKEN_RE.findall(text.lower())


def load_jsonl(path, text_field: str = "text", label_field: str = "label"):
    """Read raw (text, label) records from a JSON Lines file, in file order.

    No tokenization is performed. Malformed JSON raises ParseError with the
    line number; a missing or mistyped field raises SchemaError.
    """
    records = []
    with open(path, encoding="utf8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), lineno) from exc
            if not isinstance(obj, dict):
                raise SchemaError("record is not a JSON object", lineno)
            if text_field not in obj:
                raise SchemaError(f"missing field {text_field!r}", lineno)
            if label_field not in obj:
                raise SchemaError(f"missing field {label_field!r}", lineno)
            text, label = obj[text_field], obj[label_field]
            if not isinstance(text, str):
                raise SchemaError(f"field {text_field!r} is not a string", lineno)
            if isinstance(label, bool) or not isinstance(label, int):
                raise SchemaError(f"field {label_field!r} is not an integer", lineno)
            records.append((text, label))
    return records


def load_tsv(path):
    """Fallback reader: one record per line, text TAB label."""
    records = []
    with open(path, encoding="utf8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"expected 2 tab-separated fields, got {len(parts)}", lineno)
            try:
                label = int(parts[1])
            except ValueError as exc:
                raise SchemaError("label is not an integer", lineno) from exc
            records.append((parts[0], label))
    return records


@dataclass
class Sample:
    """A tokenized labeled text. `id` is a stable index within its split."""

    id: int
    tokens: list[str]
    label: int


class Vocabulary:
    """Token <-> id mapping with an unk slot and injected rare baseline tokens.

    Ids are assigned in order: unk first, then corpus tokens by first
    occurrence, then the injected rare tokens. `freqs[i]` is the training-text
    occurrence count of token i; rare tokens and unk always have count 0.
    """

    def __init__(self, tokens, freqs, rare_tokens=()):
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        if UNK_TOKEN not in self.token_to_id:
            raise ValueError("vocabulary must contain the unk token")
        self.freqs = np.asarray(freqs, dtype=np.int64)
        if self.freqs.shape != (len(self.id_to_token),):
            raise ValueError("freqs length does not match token count")
        self.unk_id = self.token_to_id[UNK_TOKEN]
        self.rare_token_ids = [self.token_to_id[t] for t in rare_tokens]
        for rid in self.rare_token_ids:
            if self.freqs[rid] != 0:
                raise ValueError(f"rare token {self.id_to_token[rid]!r} occurs in training text")

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def id(self, token: str) -> int:
        """Id of `token`, or unk_id when out of vocabulary."""
        return self.token_to_id.get(token, self.unk_id)

    def token(self, token_id: int) -> str:
        return self.id_to_token[token_id]

    def encode(self, tokens) -> list[int]:
        get = self.token_to_id.get
        unk = self.unk_id
        return [get(t, unk) for t in tokens]

    def most_common(self, k: int, allowed=None) -> list[int]:
        """Ids of the k highest-frequency tokens, ties toward smaller id.

        `allowed` is an optional boolean mask over ids.
        """
        ids = np.arange(len(self))
        if allowed is not None:
            ids = ids[np.asarray(allowed, dtype=bool)]
        order = np.lexsort((ids, -self.freqs[ids]))
        return [int(i) for i in ids[order][:k]]


@dataclass
class Corpus:
    """Train/test splits with class count, designated target class, and vocab.

    Immutable after construction; safe to share across concurrent readers.
    """

    train: list[Sample]
    test: list[Sample]
    num_classes: int
    target_class: int
    vocab: Vocabulary

    def split(self, name: str) -> list[Sample]:
        if name not in ("train", "test"):
            raise ValueError(f"unknown split {name!r}")
        return self.train if name == "train" else self.test


def _make_samples(records, num_classes, what):
    samples = []
    for i, (text, label) in enumerate(records):
        if not 0 <= label < num_classes:
            raise ValueError(f"{what} record {i}: label {label} out of range [0, {num_classes})")
        tokens = tokenize(text)
        if not tokens:
            raise ValueError(f"{what} record {i}: text has no tokens")
        samples.append(Sample(id=i, tokens=tokens, label=label))
    return samples


def build_vocab(train_samples, min_freq: int = 1) -> Vocabulary:
    """Vocabulary over all train tokens with frequency >= min_freq.

    The unk token comes first; rare baseline tokens are appended with zero
    frequency. A baseline word that actually occurs in the training text is
    kept as an ordinary vocabulary entry and not designated rare.
    """
    counts = Counter()
    for s in train_samples:
        counts.update(s.tokens)
    tokens = [UNK_TOKEN]
    freqs = [0]
    seen = {UNK_TOKEN}
    for s in train_samples:
        for t in s.tokens:
            if t not in seen and counts[t] >= min_freq:
                seen.add(t)
                tokens.append(t)
                freqs.append(counts[t])
    rare = []
    for t in RARE_BASELINE_TOKENS:
        if counts[t] == 0:
            rare.append(t)
            if t not in seen:
                seen.add(t)
                tokens.append(t)
                freqs.append(0)
    return Vocabulary(tokens, freqs, rare)


def build_corpus(train_records, test_records=(), *, num_classes: int,
                 target_class: int, min_freq: int = 2) -> Corpus:
    """Tokenize raw records and assemble a Corpus.

    min_freq defaults to 2 for real-data ingestion; synthetic generation
    uses 1 so every generated word stays in vocabulary.
    """
    if not 0 <= target_class < num_classes:
        raise ValueError(f"target class {target_class} out of range [0, {num_classes})")
    train = _make_samples(train_records, num_classes, "train")
    test = _make_samples(test_records, num_classes, "test")
    vocab = build_vocab(train, min_freq=min_freq)
    return Corpus(train=train, test=test, num_classes=num_classes,
                  target_class=target_class, vocab=vocab)


def non_target_subset(corpus: Corpus, split: str = "train") -> list[Sample]:
    """All samples of the split whose label differs from the target class."""
    t = corpus.target_class
    return [s for s in corpus.split(split) if s.label != t]


def target_subset(corpus: Corpus, split: str = "train") -> list[Sample]:
    """All samples of the split belonging to the target class."""
    t = corpus.target_class
    return [s for s in corpus.split(split) if s.label == t]


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic corpus recipe.

    Each class owns a disjoint keyword set; a token of a class-c sample is a
    class-c keyword with probability `keyword_strength`, otherwise a shared
    background word. When `planted_token` is set, that extra word is written
    into a `planted_rate` fraction of target-class samples (one occurrence,
    replacing a uniformly chosen position) and never appears anywhere else.
    """

    num_classes: int = 2
    samples_per_class: int = 1250
    vocab_size: int = 300
    keyword_strength: float = 0.5
    keywords_per_class: int = 12
    length_range: tuple[int, int] = (4, 12)
    target_class: int = 1
    seed: int = 0
    planted_token: str | None = None
    planted_rate: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.keyword_strength <= 1.0:
            raise ValueError("keyword_strength must lie in [0, 1]")
        if not 0.0 <= self.planted_rate <= 1.0:
            raise ValueError("planted_rate must lie in [0, 1]")
        lo, hi = self.length_range
        if lo < 1 or hi < lo:
            raise ValueError(f"bad length_range {self.length_range}")
        if not 0 <= self.target_class < self.num_classes:
            raise ValueError("target_class out of range")


def synth_generate(config: SynthConfig) -> Corpus:
    """Deterministically generate a separable-by-construction corpus.

    Split is 80/20 train/test, stratified per class. Identical seeds give
    bit-identical corpora.
    """
    C = config.num_classes
    n_keywords = C * config.keywords_per_class
    n_background = config.vocab_size - n_keywords
    if n_background < 1:
        raise ValueError(
            f"vocab_size {config.vocab_size} too small for {C} disjoint keyword sets "
            f"of {config.keywords_per_class} plus background words")
    keywords = [[f"k{c}w{j}" for j in range(config.keywords_per_class)] for c in range(C)]
    background = [f"w{j}" for j in range(n_background)]
    flat = {w for ws in keywords for w in ws} | set(background)
    if config.planted_token is not None and config.planted_token in flat:
        raise ValueError(f"planted_token {config.planted_token!r} collides with a generated word")

    rng = np.random.default_rng(config.seed)
    lo, hi = config.length_range
    p = config.keyword_strength
    train_records, test_records = [], []
    n_train = round(0.8 * config.samples_per_class)
    for c in range(C):
        for i in range(config.samples_per_class):
            length = int(rng.integers(lo, hi + 1))
            tokens = []
            for _ in range(length):
                if rng.random() < p:
                    tokens.append(keywords[c][int(rng.integers(config.keywords_per_class))])
                else:
                    tokens.append(background[int(rng.integers(n_background))])
            if (config.planted_token is not None and c == config.target_class
                    and rng.random() < config.planted_rate):
                tokens[int(rng.integers(length))] = config.planted_token
            record = (" ".join(tokens), c)
            (train_records if i < n_train else test_records).append(record)
    return build_corpus(train_records, test_records, num_classes=C,
                        target_class=config.target_class, min_freq=1)


def save_corpus(corpus: Corpus, directory) -> None:
    """Write train.jsonl / test.jsonl snapshots plus meta.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "test"):
        with open(directory / f"{name}.jsonl", "w", encoding="utf8") as fh:
            for s in corpus.split(name):
                fh.write(json.dumps({"id": s.id, "tokens": s.tokens, "label": s.label}) + "\n")
    meta = {
        "format_version": CORPUS_FORMAT_VERSION,
        "num_classes": corpus.num_classes,
        "target_class": corpus.target_class,
        "vocab_tokens": corpus.vocab.id_to_token,
        "vocab_freqs": [int(f) for f in corpus.vocab.freqs],
        "rare_tokens": [corpus.vocab.token(i) for i in corpus.vocab.rare_token_ids],
    }
    with open(directory / "meta.json", "w", encoding="utf8") as fh:
        json.dump(meta, fh)


def load_corpus(directory) -> Corpus:
    """Inverse of save_corpus; identity on samples, labels, and vocabulary."""
    directory = Path(directory)
    with open(directory / "meta.json", encoding="utf8") as fh:
        meta = json.load(fh)
    if meta.get("format_version") != CORPUS_FORMAT_VERSION:
        raise ValueError(f"unsupported corpus format version {meta.get('format_version')}")
    vocab = Vocabulary(meta["vocab_tokens"], meta["vocab_freqs"], meta["rare_tokens"])
    splits = {}
    for name in ("train", "test"):
        samples = []
        with open(directory / f"{name}.jsonl", encoding="utf8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                samples.append(Sample(id=row["id"], tokens=list(row["tokens"]), label=row["label"]))
        splits[name] = samples
    return Corpus(train=splits["train"], test=splits["test"],
                  num_classes=meta["num_classes"], target_class=meta["target_class"],
                  vocab=vocab)
