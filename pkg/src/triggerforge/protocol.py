"""Pinned desk-scale experiment protocols and the flat config-file format.

Config files are plain text, one `key = value` per line with `#` comments.
Values parse as int, float, bool, or a comma list; everything else stays a
string. The shipped protocols live in triggerforge/configs/ and every value
in them can be overridden from a user file or the CLI.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .corpus import SynthConfig
from .model import ModelConfig, TrainConfig

BUILTIN_PREFIX = "builtin:"
DEFAULT_PROTOCOL = "desk_c2"


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",")]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = line.split("=", 1)
        out[key.strip()] = _parse_value(raw)
    return out


def builtin_config_text(name: str) -> str:
    ref = resources.files("triggerforge").joinpath(f"configs/{name}.cfg")
    if not ref.is_file():
        raise ValueError(f"no builtin protocol named {name!r}")
    return ref.read_text(encoding="utf8")


def read_config(source=None) -> dict:
    """Load a config dict from a path, a `builtin:<name>` reference, or the
    default desk protocol when source is None."""
    if source is None:
        source = BUILTIN_PREFIX + DEFAULT_PROTOCOL
    source = str(source)
    if source.startswith(BUILTIN_PREFIX):
        return parse_config_text(builtin_config_text(source[len(BUILTIN_PREFIX):]))
    return parse_config_text(Path(source).read_text(encoding="utf8"))


def synth_config_from(cfg: dict, seed=None) -> SynthConfig:
    return SynthConfig(
        num_classes=cfg.get("num_classes", 2),
        samples_per_class=cfg.get("samples_per_class", 1250),
        vocab_size=cfg.get("vocab_size", 300),
        keyword_strength=cfg.get("keyword_strength", 0.5),
        keywords_per_class=cfg.get("keywords_per_class", 12),
        length_range=(cfg.get("length_min", 4), cfg.get("length_max", 12)),
        target_class=cfg.get("target_class", 1),
        seed=cfg.get("seed", 0) if seed is None else seed,
        planted_token=cfg.get("planted_token"),
        planted_rate=cfg.get("planted_rate", 0.6),
    )


def model_config_from(cfg: dict, vocab_size: int, seed=None) -> ModelConfig:
    return ModelConfig(
        embed_dim=cfg.get("embed_dim", 32),
        hidden_dim=cfg.get("hidden_dim", 64),
        num_classes=cfg.get("num_classes", 2),
        vocab_size=vocab_size,
        init_scale=cfg.get("init_scale", 0.1),
        seed=cfg.get("seed", 0) if seed is None else seed,
    )


def train_config_from(cfg: dict, seed=None) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.get("epochs", 10),
        batch_size=cfg.get("batch_size", 32),
        learning_rate=cfg.get("learning_rate", 0.05),
        momentum=cfg.get("momentum", 0.9),
        warmup_epochs=cfg.get("warmup_epochs", 3),
        schedule=cfg.get("schedule", "linear"),
        seed=cfg.get("seed", 0) if seed is None else seed,
    )
