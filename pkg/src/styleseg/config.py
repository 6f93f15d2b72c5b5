"""INI-style config files for generation and training.

Synthetic corpus::

    [synth]
    n_images = 200
    resolution = 64
    seed = 0
    area_range = 0.15, 0.35

    [style.loose]
    margin = 4

    [style.tight]
    margin = -4

Styles are taken in file order; ``planted_style`` in the manifest is the
0-based position of the section. Training::

    [train]
    mode = styleseg
    m = 2
    epochs = 30
    loss_weights = 1, 1, 1

Every key maps onto a field of :class:`SynthConfig`, :class:`StyleParams` or
:class:`TrainConfig`; unknown keys and unparsable values raise
:class:`ConfigError` whose message starts with the offending key.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import os
import typing
from pathlib import Path

from .data import ConfigError, StyleParams, SynthConfig
from .training import TrainConfig

SEED_ENV = "STYLESEG_SEED"

_SYNTH_SKIP = {"styles"}
_TRAIN_SKIP = {"checkpoint_dir"}


def _parse_value(section: str, key: str, raw: str, kind):
    where = f"{section}.{key}"
    if type(None) in typing.get_args(kind):
        kind = next(a for a in typing.get_args(kind) if a is not type(None))
    origin = typing.get_origin(kind)
    try:
        if kind is bool:
            return {"true": True, "false": False, "1": True, "0": False}[raw.strip().lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw.strip()
        if origin is tuple:
            args = typing.get_args(kind)
            parts = [x.strip() for x in raw.split(",") if x.strip()]
            if len(parts) != len(args):
                raise ValueError(f"expected {len(args)} comma-separated values")
            return tuple(t(x) for t, x in zip(args, parts))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} ({exc})") from None
    raise ConfigError(f"{where}: unsupported field type")


def _section_values(parser, section: str, cls, skip=frozenset()) -> dict:
    hints = typing.get_type_hints(cls)
    allowed = {f.name for f in dataclasses.fields(cls)} - set(skip)
    values = {}
    for key, raw in parser.items(section):
        if key not in allowed:
            raise ConfigError(f"{section}.{key}: unknown key")
        values[key] = _parse_value(section, key, raw, hints[key])
    return values


def _read(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc.message.splitlines()[0]}") from None
    return parser


def seed_override() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}: not an integer: {raw!r}") from None


def load_synth_config(path) -> SynthConfig:
    parser = _read(path)
    unknown = [s for s in parser.sections() if s != "synth" and not s.startswith("style.")]
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section")
    values = _section_values(parser, "synth", SynthConfig, _SYNTH_SKIP) if parser.has_section("synth") else {}
    styles = []
    for section in parser.sections():
        if section.startswith("style."):
            name = section[len("style."):]
            kw = _section_values(parser, section, StyleParams, {"name"})
            styles.append(StyleParams(name=name, **kw))
    seed = seed_override()
    if seed is not None:
        values["seed"] = seed
    cfg = SynthConfig(styles=styles, **values)
    cfg.validate()
    return cfg


def load_train_config(path) -> TrainConfig:
    parser = _read(path)
    unknown = [s for s in parser.sections() if s != "train"]
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section")
    if not parser.has_section("train"):
        raise ConfigError("train: missing section")
    values = _section_values(parser, "train", TrainConfig, _TRAIN_SKIP)
    seed = seed_override()
    if seed is not None:
        values["seed"] = seed
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
