"""Pipeline configuration from a ``key = value`` file with ``[section]`` headers."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .enhance import TARGET_LUFS, TrimSpec
from .features import NormStats, StftParams
from .flow import SamplerConfig
from .model.config import LossWeights, ModelConfig, TrainConfig


class ConfigError(ValueError):
    pass


PATH_KEYS = ("manifest", "work_dir", "vocab", "canon_rules", "number_lexicon", "asr_gt", "asr_tts")
REQUIRED_FILES = ("manifest",)
OPTIONAL_FILES = ("vocab", "canon_rules", "number_lexicon", "asr_gt", "asr_tts")


@dataclass(frozen=True)
class RunConfig:
    """Training schedule and stage options that sit outside the model and optimizer."""

    steps: int = 500
    align_warmup: int = 100
    eval_every: int = 50
    synth_splits: tuple[str, ...] = ("valid", "test")
    eval_splits: tuple[str, ...] = ("valid", "test")
    speaker: str = ""

    def __post_init__(self):
        if self.steps < 0 or self.align_warmup < 0 or self.eval_every < 1:
            raise ValueError("steps and align_warmup must be >= 0, eval_every >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    root: Path
    paths: dict = field(default_factory=dict)
    stft: StftParams = StftParams()
    norm: NormStats = NormStats()
    trim: TrimSpec = TrimSpec()
    target_lufs: float = TARGET_LUFS
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    sampler: SamplerConfig = SamplerConfig()
    run: RunConfig = RunConfig()

    def path(self, key: str) -> Path | None:
        value = self.paths.get(key)
        return None if value is None else Path(value)

    @property
    def work_dir(self) -> Path:
        return self.path("work_dir") or self.root / "work"

    def digest(self, *sections: str) -> str:
        """Stable hash of the named sections, used as part of stage cache keys."""
        parts = {}
        for name in sections:
            value = getattr(self, name)
            if dataclasses.is_dataclass(value):
                value = dataclasses.asdict(value)
            parts[name] = value
        blob = json.dumps(parts, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _convert(name: str, raw: str, like):
    try:
        if isinstance(like, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            items = raw.replace(",", " ").split()
            return tuple(type(like[0])(x) for x in items) if like else tuple(items)
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


def _build(cls, section: str, items: dict, **fixed):
    defaults = cls(**fixed) if fixed else cls()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(cls) if f.init}
    kwargs = dict(fixed)
    for key, raw in items.items():
        if key not in known or key in fixed:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        kwargs[key] = _convert(f"[{section}] {key}", raw, known[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def parse_config(text: str, root: str | Path = ".") -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    root = Path(root).resolve()
    known = {"paths", "stft", "norm", "trim", "loudness", "model", "loss", "train", "sampler", "run"}
    for name in parser.sections():
        if name not in known:
            raise ConfigError(f"unknown section [{name}]")
    sec = {name: dict(parser[name]) if parser.has_section(name) else {} for name in known}

    paths = {}
    for key, raw in sec["paths"].items():
        if key not in PATH_KEYS:
            raise ConfigError(f"[paths] unknown key {key!r}")
        if raw.strip():
            p = Path(raw.strip())
            paths[key] = p if p.is_absolute() else root / p
    if "manifest" not in paths:
        raise ConfigError("[paths] manifest is required")
    for key in REQUIRED_FILES + OPTIONAL_FILES:
        if key in paths and not paths[key].is_file():
            raise ConfigError(f"[paths] {key}: {paths[key]} does not exist")

    loudness = sec["loudness"]
    if set(loudness) - {"target_lufs"}:
        raise ConfigError(f"[loudness] unknown keys {sorted(set(loudness) - {'target_lufs'})}")
    target = _convert("[loudness] target_lufs", loudness.get("target_lufs", str(TARGET_LUFS)), 0.0)
    if not -70.0 < target < 0.0:
        raise ConfigError("[loudness] target_lufs must lie in (-70, 0)")

    weights = _build(LossWeights, "loss", sec["loss"])
    model = _build(ModelConfig, "model", sec["model"], loss_weights=weights)
    stft = _build(StftParams, "stft", sec["stft"])
    if model.n_mels != stft.n_mels:
        raise ConfigError("[model] n_mels must equal [stft] n_mels")
    norm = _build(NormStats, "norm", sec["norm"])
    if (model.mel_mean, model.mel_std) != (norm.mean, norm.std):
        model = dataclasses.replace(model, mel_mean=norm.mean, mel_std=norm.std)
    return PipelineConfig(
        root=root,
        paths=paths,
        stft=stft,
        norm=norm,
        trim=_build(TrimSpec, "trim", sec["trim"]),
        target_lufs=target,
        model=model,
        train=_build(TrainConfig, "train", sec["train"]),
        sampler=_build(SamplerConfig, "sampler", sec["sampler"]),
        run=_build(RunConfig, "run", sec["run"]),
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)
