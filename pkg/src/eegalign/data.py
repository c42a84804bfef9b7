"""Synthetic EEG corpora, trial-directory IO, and train/val/test splits.

Synthetic classes are narrowband oscillations: each class has a carrier
frequency and a spatial weight vector over the 65 montage channels; trials
add per-(subject, trial) gain and phase plus Gaussian noise. Generation is
deterministic per seed, with independent substreams per trial so corpora are
reproducible regardless of generation order.

Trial directory format ("ETRIAL v1"): ``manifest.json`` lists, per trial,
trial_id, subject_id, optional label, channel names, sample_rate, and the
relative path of a little-endian float32 binary of shape C x T (row-major).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .montage import MONTAGE_SIZE, Montage65, default_montage
from .signal import DEFAULT_RATE_HZ, RawTrial

ETRIAL_FORMAT = "ETRIAL v1"


@dataclass(frozen=True)
class ClassSpec:
    """One synthetic class: a named carrier with a scalp weight pattern."""

    name: str
    carrier_hz: float
    weights: np.ndarray  # (65,)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.shape != (MONTAGE_SIZE,):
            raise ValueError(f"class weights must be ({MONTAGE_SIZE},), got {w.shape}")


def focal_weights(
    focus: str, spread: float = 0.6, montage: Montage65 | None = None
) -> np.ndarray:
    """Gaussian scalp blob centered on one electrode (by great-arc proxy distance)."""
    montage = montage or default_montage()
    center = montage.positions[montage.index(focus)]
    dist = np.linalg.norm(montage.positions - center[None, :], axis=1)
    return np.exp(-0.5 * (dist / spread) ** 2)


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple[ClassSpec, ...]
    subjects: int = 8
    trials_per_subject_per_class: int = 10
    duration_s: float = 2.0
    noise_sigma: float = 0.5
    gain_range: tuple[float, float] = (0.8, 1.2)
    sample_rate: float = DEFAULT_RATE_HZ
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self) -> None:
        carriers = [c.carrier_hz for c in self.classes]
        if len(set(carriers)) != len(carriers):
            raise ValueError("class carriers must be distinct")
        if any(f >= self.sample_rate / 2 for f in carriers):
            raise ValueError("carriers must be below Nyquist")
        if self.subjects < 1 or self.trials_per_subject_per_class < 1:
            raise ValueError("counts must be >= 1")


def generate_synthetic(spec: SynthSpec) -> list[RawTrial]:
    """Build a balanced labeled corpus: per subject, trials cycle the classes.

    Each trial is gain * weights (outer) sin(2 pi f t + phase) + noise with
    gain, phase, and noise drawn from a substream keyed by
    (seed, subject, trial, class).
    """
    n_samples = int(round(spec.duration_s * spec.sample_rate))
    t = np.arange(n_samples, dtype=np.float64) / spec.sample_rate
    montage = default_montage()
    trials: list[RawTrial] = []
    for s in range(spec.subjects):
        for r in range(spec.trials_per_subject_per_class):
            for ci, cls in enumerate(spec.classes):
                rng = np.random.default_rng([spec.seed, s, r, ci])
                gain = rng.uniform(*spec.gain_range)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                wave = np.sin(2.0 * np.pi * cls.carrier_hz * t + phase)
                data = gain * np.outer(cls.weights, wave)
                if spec.noise_sigma > 0:
                    data = data + spec.noise_sigma * rng.standard_normal(data.shape)
                trials.append(
                    RawTrial(
                        channel_names=montage.names,
                        sample_rate=spec.sample_rate,
                        data=data.astype(np.float32),
                        subject_id=f"S{s + 1:02d}",
                        trial_id=f"{spec.name}-S{s + 1:02d}-r{r:03d}-{cls.name}",
                        label=cls.name,
                    )
                )
    return trials


def write_corpus(trials: list[RawTrial], out_dir: str | Path, name: str = "corpus") -> Path:
    """Write trials as an ETRIAL v1 directory; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for trial in trials:
        rel = f"trials/{trial.trial_id}.f32"
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(np.ascontiguousarray(trial.data, dtype="<f4").tobytes())
        records.append(
            {
                "trial_id": trial.trial_id,
                "subject_id": trial.subject_id,
                "label": trial.label,
                "channel_names": list(trial.channel_names),
                "sample_rate": trial.sample_rate,
                "path": rel,
            }
        )
    manifest = {"format": ETRIAL_FORMAT, "name": name, "trials": records}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def read_corpus(corpus_dir: str | Path) -> tuple[str, list[RawTrial]]:
    """Load an ETRIAL v1 directory; returns (corpus name, trials in manifest order)."""
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no manifest.json in {corpus_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != ETRIAL_FORMAT:
        raise ValueError(
            f"{manifest_path}: format {manifest.get('format')!r}, expected {ETRIAL_FORMAT!r}"
        )
    trials = []
    for rec in manifest["trials"]:
        raw = (corpus_dir / rec["path"]).read_bytes()
        channels = rec["channel_names"]
        values = np.frombuffer(raw, dtype="<f4")
        if values.size % len(channels) != 0:
            raise ValueError(
                f"{rec['path']}: {values.size} samples not divisible by "
                f"{len(channels)} channels"
            )
        data = values.reshape(len(channels), -1).copy()
        trials.append(
            RawTrial(
                channel_names=tuple(channels),
                sample_rate=float(rec["sample_rate"]),
                data=data,
                subject_id=rec["subject_id"],
                trial_id=rec["trial_id"],
                label=rec.get("label"),
            )
        )
    return manifest.get("name", corpus_dir.name), trials


class SplitMode:
    CROSS_SUBJECT = "cross_subject"
    MULTI_SUBJECT = "multi_subject"


@dataclass(frozen=True)
class SplitPlan:
    mode: str = SplitMode.CROSS_SUBJECT
    train_fraction: float = 0.75  # multi-subject: per-subject share of trials
    test_subjects: int | None = None  # cross-subject: explicit test-set size
    train_subject_fraction: float = 0.8  # cross-subject fallback ratio
    val_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.mode not in (SplitMode.CROSS_SUBJECT, SplitMode.MULTI_SUBJECT):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")


@dataclass(frozen=True)
class Split:
    train: list[RawTrial] = field(default_factory=list)
    val: list[RawTrial] = field(default_factory=list)
    test: list[RawTrial] = field(default_factory=list)


def _subjects_in_order(trials: list[RawTrial]) -> list[str]:
    seen: dict[str, None] = {}
    for t in trials:
        seen.setdefault(t.subject_id, None)
    return list(seen)


def split_cross_subject(trials: list[RawTrial], plan: SplitPlan) -> Split:
    """Hold out whole subjects for test; carve validation subjects from train."""
    subjects = _subjects_in_order(trials)
    if len(subjects) < 3:
        raise ValueError(f"cross-subject split needs >= 3 subjects, got {len(subjects)}")
    if plan.test_subjects is not None:
        n_test = plan.test_subjects
    else:
        n_test = len(subjects) - int(round(plan.train_subject_fraction * len(subjects)))
    n_test = max(1, min(n_test, len(subjects) - 2))
    trainval = subjects[: len(subjects) - n_test]
    test_set = set(subjects[len(subjects) - n_test :])
    n_val = max(1, int(round(plan.val_fraction * len(trainval))))
    val_set = set(trainval[len(trainval) - n_val :])
    split = Split()
    for t in trials:
        if t.subject_id in test_set:
            split.test.append(t)
        elif t.subject_id in val_set:
            split.val.append(t)
        else:
            split.train.append(t)
    return split


def split_multi_subject(trials: list[RawTrial], plan: SplitPlan) -> Split:
    """Per subject: leading trials train/val, trailing trials test (by corpus order)."""
    by_subject: dict[str, list[RawTrial]] = {}
    for t in trials:
        by_subject.setdefault(t.subject_id, []).append(t)
    for subject, ts in by_subject.items():
        if len(ts) < 4:
            raise ValueError(
                f"multi-subject split needs >= 4 trials per subject; "
                f"{subject} has {len(ts)}"
            )
    split = Split()
    for ts in by_subject.values():
        n_trainval = int(np.floor(plan.train_fraction * len(ts)))
        n_val = max(1, int(round(plan.val_fraction * n_trainval)))
        split.train.extend(ts[: n_trainval - n_val])
        split.val.extend(ts[n_trainval - n_val : n_trainval])
        split.test.extend(ts[n_trainval:])
    return split


def split_corpus(trials: list[RawTrial], plan: SplitPlan) -> Split:
    if plan.mode == SplitMode.CROSS_SUBJECT:
        return split_cross_subject(trials, plan)
    return split_multi_subject(trials, plan)
