"""Flat key-value run configuration.

File format: one `key = value` per line, `#` comments and blank lines
ignored. Keys are dotted (model.*, sampler.*, injection.*, io.*, sweep.*) and
every key has a typed schema entry; unknown keys are rejected. Serialization
is deterministic (sorted keys, repr floats) and parse(serialize(c)) == c.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

from .coreattn import ScoreMode
from .errors import ConfigError
from .glyphs import Layout
from .model import ModelConfig
from .sampler import SamplerConfig


@dataclass(frozen=True)
class InjectionConfig:
    ratio: float = 0.125
    mode: ScoreMode = ScoreMode.ROW_MASS
    averaging: bool = True
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError(f"injection ratio {self.ratio} outside [0,1]")


@dataclass(frozen=True)
class IOConfig:
    """Defaults render "logo" at scale 4: glyph strokes then fill whole patches,
    so the patch mask clears the 0.5 on-mask threshold. Longer words need a
    smaller scale or a larger grid."""

    word: str = "logo"
    style: str = "bold geometric strokes"
    layout: Layout = Layout.HORIZONTAL
    scale: int = 4
    glyph_path: str = ""
    recon_prompt: str = ""
    out_dir: str = "."
    save_trace: bool = False
    predicted: str = ""

    def __post_init__(self):
        if self.scale < 1:
            raise ConfigError("io.scale must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    ratios: tuple[float, ...] = (0.125, 0.25, 0.5, 0.75, 1.0)
    steps: tuple[int, ...] = (8, 10, 12, 15, 18)
    full_runs: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    io: IOConfig = field(default_factory=IOConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)


# key -> (section attr, field name, type tag)
_SCHEMA: dict[str, tuple[str, str, str]] = {
    "model.d_model": ("model", "d_model", "int"),
    "model.n_heads": ("model", "n_heads", "int"),
    "model.n_layers": ("model", "n_layers", "int"),
    "model.patch": ("model", "patch", "int"),
    "model.grid": ("model", "grid", "int"),
    "model.t_txt": ("model", "t_txt", "int"),
    "model.seed_weights": ("model", "seed", "int"),
    "sampler.steps": ("sampler", "steps", "int"),
    "sampler.guidance": ("sampler", "guidance", "float"),
    "sampler.cutoff": ("sampler", "cutoff_step", "int"),
    "sampler.seed_noise": ("sampler", "noise_seed", "int"),
    "injection.ratio": ("injection", "ratio", "float"),
    "injection.mode": ("injection", "mode", "mode"),
    "injection.averaging": ("injection", "averaging", "bool"),
    "injection.enabled": ("injection", "enabled", "bool"),
    "io.word": ("io", "word", "str"),
    "io.style": ("io", "style", "str"),
    "io.layout": ("io", "layout", "layout"),
    "io.scale": ("io", "scale", "int"),
    "io.glyph_path": ("io", "glyph_path", "str"),
    "io.recon_prompt": ("io", "recon_prompt", "str"),
    "io.out_dir": ("io", "out_dir", "str"),
    "io.save_trace": ("io", "save_trace", "bool"),
    "io.predicted": ("io", "predicted", "str"),
    "sweep.ratios": ("sweep", "ratios", "floats"),
    "sweep.steps": ("sweep", "steps", "ints"),
    "sweep.full_runs": ("sweep", "full_runs", "bool"),
}


def _decode(key: str, tag: str, raw: str):
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            if raw not in ("true", "false"):
                raise ValueError(f"expected true/false, got {raw!r}")
            return raw == "true"
        if tag == "str":
            return raw
        if tag == "mode":
            return ScoreMode(raw)
        if tag == "layout":
            return Layout(raw)
        if tag == "floats":
            return tuple(float(p.strip()) for p in raw.split(",") if p.strip())
        if tag == "ints":
            return tuple(int(p.strip()) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc
    raise ConfigError(f"unknown schema tag {tag}")


def _encode(key: str, tag: str, value) -> str:
    if tag == "int":
        return str(value)
    if tag == "float":
        return repr(float(value))
    if tag == "bool":
        return "true" if value else "false"
    if tag == "str":
        if value != value.strip() or "\n" in value:
            raise ConfigError(f"string value for {key} must be trimmed single-line")
        return value
    if tag in ("mode", "layout"):
        return value.value
    if tag == "floats":
        return ",".join(repr(float(v)) for v in value)
    if tag == "ints":
        return ",".join(str(v) for v in value)
    raise ConfigError(f"unknown schema tag {tag}")


def serialize(config: RunConfig) -> str:
    lines = []
    for key in sorted(_SCHEMA):
        section, name, tag = _SCHEMA[key]
        value = getattr(getattr(config, section), name)
        lines.append(f"{key} = {_encode(key, tag, value)}".rstrip())
    return "\n".join(lines) + "\n"


def parse(text: str) -> RunConfig:
    updates: dict[str, dict[str, object]] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, name, tag = _SCHEMA[key]
        updates.setdefault(section, {})[name] = _decode(key, tag, raw)

    config = RunConfig()
    for section, kwargs in updates.items():
        config = replace(config, **{section: replace(getattr(config, section), **kwargs)})
    return config


def parse_file(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def config_hash(config: RunConfig, inputs: dict[str, str] | None = None) -> str:
    """sha256 over the serialized config plus sorted named input checksums."""
    h = hashlib.sha256()
    h.update(serialize(config).encode("utf-8"))
    for key in sorted(inputs or {}):
        h.update(f"input {key} {(inputs or {})[key]}\n".encode("utf-8"))
    return h.hexdigest()


def describe_keys() -> str:
    """One line per config key: name and type tag. For --help output."""
    return "\n".join(f"{key} ({_SCHEMA[key][2]})" for key in sorted(_SCHEMA))
