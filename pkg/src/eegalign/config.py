"""Run configuration: one TOML file with sections [signal], [tokenizer],
[encoder], [instruct], [train], [data].

Every key maps to a field on the corresponding config dataclass; unknown keys
or sections fail with an error naming them. The resolved configuration is
snapshotted into run manifests and checkpoints.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import ClassSpec, SplitMode, SplitPlan, SynthSpec, focal_weights
from .encoder import EncoderConfig
from .instruct import InstructConfig
from .signal import SignalConfig
from .tokenizer import TokenizerConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ClassConfig:
    """One synthetic class: carrier frequency plus a focal scalp pattern."""

    name: str
    carrier_hz: float
    focus: str = "Cz"
    spread: float = 0.6


def _default_classes() -> list[ClassConfig]:
    return [
        ClassConfig("theta", 6.0, "Fz"),
        ClassConfig("alpha", 10.0, "Oz"),
        ClassConfig("sigma", 14.0, "C3"),
        ClassConfig("beta", 20.0, "C4"),
    ]


@dataclass
class DataConfig:
    name: str = "synthetic"
    classes: list[ClassConfig] = field(default_factory=_default_classes)
    subjects: int = 8
    trials_per_subject_per_class: int = 10
    duration_s: float = 2.0
    noise_sigma: float = 0.5
    gain_lo: float = 0.8
    gain_hi: float = 1.2
    seed: int = 0
    split_mode: str = SplitMode.CROSS_SUBJECT
    test_subjects: int = 0  # 0: derive from train_subject_fraction
    train_subject_fraction: float = 0.8
    train_fraction: float = 0.75
    val_fraction: float = 0.2

    def synth_spec(self, sample_rate: float = 200.0) -> SynthSpec:
        specs = tuple(
            ClassSpec(c.name, c.carrier_hz, focal_weights(c.focus, c.spread))
            for c in self.classes
        )
        return SynthSpec(
            classes=specs,
            subjects=self.subjects,
            trials_per_subject_per_class=self.trials_per_subject_per_class,
            duration_s=self.duration_s,
            noise_sigma=self.noise_sigma,
            gain_range=(self.gain_lo, self.gain_hi),
            sample_rate=sample_rate,
            seed=self.seed,
            name=self.name,
        )

    def split_plan(self) -> SplitPlan:
        return SplitPlan(
            mode=self.split_mode,
            train_fraction=self.train_fraction,
            test_subjects=self.test_subjects or None,
            train_subject_fraction=self.train_subject_fraction,
            val_fraction=self.val_fraction,
        )


_SECTIONS = {
    "signal": SignalConfig,
    "tokenizer": TokenizerConfig,
    "encoder": EncoderConfig,
    "instruct": InstructConfig,
    "train": TrainConfig,
    "data": DataConfig,
}


@dataclass
class RunConfig:
    signal: SignalConfig = field(default_factory=SignalConfig)
    tokenizer: TokenizerConfig | None = None  # defaults to encoder d
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    instruct: InstructConfig = field(default_factory=InstructConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self) -> None:
        if self.tokenizer is None:
            self.tokenizer = TokenizerConfig(
                d=self.encoder.d, window_samples=self.signal.window_samples
            )

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}


def _build_section(name: str, cls, raw: dict):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{name}]")
        if key == "betas":
            value = tuple(value)
        if key == "classes":
            value = [_build_section("data.classes", ClassConfig, item) for item in value]
        if key == "grad_clip" and value == 0:
            value = None
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section [{name}]: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    sections = {}
    for name, value in raw.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}] in {path}")
        sections[name] = _build_section(name, _SECTIONS[name], value)
    return RunConfig(**sections)


def config_schema() -> dict[str, list[str]]:
    """Section -> documented key names (drives --help and doc-coverage tests)."""
    schema = {}
    for name, cls in _SECTIONS.items():
        schema[name] = [f.name for f in fields(cls)]
    schema["data.classes"] = [f.name for f in fields(ClassConfig)]
    return schema
