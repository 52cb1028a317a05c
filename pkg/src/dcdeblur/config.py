"""Flat key=value configuration shared by the CLI and the config file.

One registry drives everything: file parsing, per-key command-line
overrides, dump/reload round-trips, and --help listings. Unknown keys are
rejected with their line number; validation reports every violation at
once rather than the first.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import ConfigError
from .networks import NetworkSpec
from .training import TrainConfig


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_int_list(text: str) -> tuple:
    items = [piece.strip() for piece in text.split(",") if piece.strip()]
    if not items:
        return ()
    return tuple(int(piece) for piece in items)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (owner dataclass name, parser)
KEY_REGISTRY: dict[str, tuple[str, object]] = {
    "lambda1": ("train", _parse_float),
    "lambda2": ("train", _parse_float),
    "dc_window": ("train", _parse_int),
    "lr": ("train", _parse_float),
    "beta1": ("train", _parse_float),
    "beta2": ("train", _parse_float),
    "eps": ("train", _parse_float),
    "d_steps_per_iter": ("train", _parse_int),
    "g_steps_per_iter": ("train", _parse_int),
    "crop": ("train", _parse_int),
    "downsample_factor": ("train", _parse_int),
    "noise_variance": ("train", _parse_float),
    "epochs": ("train", _parse_int),
    "batch": ("train", _parse_int),
    "seed": ("train", _parse_int),
    "checkpoint_every": ("train", _parse_int),
    "encoder_filters": ("net", _parse_int_list),
    "decoder_filters": ("net", _parse_int_list),
    "kernel": ("net", _parse_int),
    "stride": ("net", _parse_int),
    "leak": ("net", _parse_float),
    "dropout_rate": ("net", _parse_float),
    "dropout_blocks": ("net", _parse_int_list),
    "normalize_first_layer": ("net", _parse_bool),
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """key=value lines -> raw string values; # comments and blanks allowed."""
    values: dict[str, str] = {}
    problems: list[str] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected key=value, got {line!r}")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KEY_REGISTRY:
            problems.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        if key in values:
            problems.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        values[key] = value.strip()
    if problems:
        raise ConfigError("\n".join(problems))
    return values


def build_configs(values: dict[str, str]) -> tuple[TrainConfig, NetworkSpec]:
    """Typed configs from raw strings; collects every parse/validation error."""
    problems: list[str] = []
    train_kwargs: dict = {}
    net_kwargs: dict = {}
    for key, raw in values.items():
        owner, parser = KEY_REGISTRY[key]
        try:
            parsed = parser(raw)
        except ValueError as exc:
            problems.append(f"key {key!r}: {exc}")
            continue
        (train_kwargs if owner == "train" else net_kwargs)[key] = parsed
    if problems:
        raise ConfigError("\n".join(problems))

    cfg = TrainConfig(**train_kwargs)
    # the discriminator's head grid always follows the training crop
    spec = NetworkSpec(image_size=cfg.crop, **net_kwargs)
    problems = cfg.violations(spec) + spec.violations()
    if problems:
        raise ConfigError("\n".join(problems))
    return cfg, spec


def load_config_file(path, overrides: dict[str, str] | None = None):
    """Parse a config file, apply overrides, and build validated configs."""
    values = parse_config_text(Path(path).read_text(encoding="utf-8"), source=str(path))
    values.update(overrides or {})
    return build_configs(values)


def dump_config(cfg: TrainConfig, spec: NetworkSpec) -> str:
    """Canonical text form; parse(dump(...)) reproduces the same configs."""
    lines = []
    for key, (owner, _) in KEY_REGISTRY.items():
        source = cfg if owner == "train" else spec
        lines.append(f"{key}={_fmt(getattr(source, key))}")
    return "\n".join(lines) + "\n"


def describe_keys() -> str:
    """One line per accepted config key, with its default."""
    cfg = TrainConfig()
    spec = NetworkSpec()
    lines = []
    for key, (owner, _) in KEY_REGISTRY.items():
        default = getattr(cfg if owner == "train" else spec, key)
        lines.append(f"  {key} (default {_fmt(default)})")
    return "\n".join(lines)


def replace_from_overrides(cfg: TrainConfig, spec: NetworkSpec,
                           overrides: dict[str, str]):
    """Apply raw-string overrides on top of existing configs."""
    merged = {key: _fmt(getattr(cfg if owner == "train" else spec, key))
              for key, (owner, _) in KEY_REGISTRY.items()}
    merged.update(overrides)
    return build_configs(merged)


def specs_equal(a, b) -> bool:
    return dataclasses.asdict(a) == dataclasses.asdict(b)
