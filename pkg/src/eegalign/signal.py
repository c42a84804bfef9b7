"""EEG preprocessing: montage interpolation, resampling, band-pass filtering,
segmentation, and FFT spectral band masking.

All operations are pure functions over immutable trial/segment values. Filters
are zero-phase brick-wall operations in the real-FFT domain, so pass-band
preservation and stop-band attenuation are exact per frequency bin. Math runs
in float32 by default; pass ``dtype=np.float64`` for oracle-grade precision.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .montage import MONTAGE_SIZE, Montage65

DEFAULT_RATE_HZ = 200.0
DEFAULT_WINDOW_SAMPLES = 100  # 0.5 s at 200 Hz


@dataclass
class SignalConfig:
    """Preprocessing and band-masking parameters."""

    target_rate_hz: float = DEFAULT_RATE_HZ
    bandpass_lo_hz: float = 0.3
    bandpass_hi_hz: float = 40.0
    window_samples: int = DEFAULT_WINDOW_SAMPLES
    mask_cutoff_lo_hz: float = 1.0
    mask_cutoff_hi_hz: float = 50.0
    mask_band_width_hz: float = 6.0

    def __post_init__(self) -> None:
        if not 0 <= self.bandpass_lo_hz < self.bandpass_hi_hz <= self.target_rate_hz / 2:
            raise ValueError("band-pass range must satisfy 0 <= lo < hi <= Nyquist")
        if self.mask_cutoff_lo_hz + self.mask_band_width_hz > self.mask_cutoff_hi_hz:
            raise ValueError("mask band width exceeds the cutoff range")


@dataclass(frozen=True)
class RawTrial:
    """A multichannel EEG recording with per-trial metadata."""

    channel_names: tuple[str, ...]
    sample_rate: float
    data: np.ndarray  # (channels, samples), microvolts
    subject_id: str
    trial_id: str
    label: str | None = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if data.ndim != 2:
            raise ValueError(f"trial data must be 2-D (channels, samples), got {data.ndim}-D")
        if data.shape[0] != len(self.channel_names):
            raise ValueError(
                f"trial {self.trial_id!r}: {data.shape[0]} data rows but "
                f"{len(self.channel_names)} channel names"
            )
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.isfinite(data).all():
            raise ValueError(f"trial {self.trial_id!r} contains NaN/Inf samples")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0


@dataclass(frozen=True)
class Segment:
    """A fixed-length 65-channel window, the tokenization unit."""

    data: np.ndarray  # (65, t), microvolts
    trial_id: str
    index: int

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[0] != MONTAGE_SIZE:
            raise ValueError(f"segment must be ({MONTAGE_SIZE}, t), got {data.shape}")
        if self.index < 0:
            raise ValueError("segment index must be >= 0")

    @property
    def window(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class BandMask:
    """A contiguous frequency band [f_min, f_max] to suppress, in Hz."""

    f_min: float
    f_max: float

    def __post_init__(self) -> None:
        if not 0 < self.f_min < self.f_max:
            raise ValueError(f"need 0 < f_min < f_max, got [{self.f_min}, {self.f_max}]")

    @property
    def width(self) -> float:
        return self.f_max - self.f_min


def interpolate_montage(
    trial: RawTrial,
    montage: Montage65,
    source_positions: Mapping[str, Sequence[float]],
    k_nearest: int = 3,
) -> RawTrial:
    """Map a trial onto the 65-channel montage by inverse-distance weighting.

    Each target electrode is a convex combination of its ``k_nearest`` source
    electrodes (weights proportional to 1/distance, normalized to sum to 1).
    A source sitting exactly on the target position takes all the weight.
    """
    if len(trial.channel_names) == 0:
        raise ValueError("trial has no channels")
    src = np.empty((len(trial.channel_names), 3), dtype=np.float64)
    for i, name in enumerate(trial.channel_names):
        if name not in source_positions:
            raise KeyError(f"no position supplied for source channel {name!r}")
        src[i] = np.asarray(source_positions[name], dtype=np.float64)

    k = min(k_nearest, src.shape[0])
    out = np.empty((MONTAGE_SIZE, trial.n_samples), dtype=trial.data.dtype)
    for t, target in enumerate(montage.positions):
        dists = np.linalg.norm(src - target[None, :], axis=1)
        nearest = np.argsort(dists, kind="stable")[:k]
        d = dists[nearest]
        if d[0] < 1e-12:
            weights = (d < 1e-12).astype(np.float64)
        else:
            weights = 1.0 / d
        weights = weights / weights.sum()
        out[t] = weights @ trial.data[nearest]
    return replace(trial, channel_names=montage.names, data=out)


def montage_weights(
    target: Sequence[float],
    source_positions: np.ndarray,
    k_nearest: int = 3,
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and normalized inverse-distance weights for one target point.

    Exposed so the weighting rule can be checked independently of the
    interpolation loop.
    """
    target = np.asarray(target, dtype=np.float64)
    dists = np.linalg.norm(source_positions - target[None, :], axis=1)
    nearest = np.argsort(dists, kind="stable")[: min(k_nearest, len(dists))]
    d = dists[nearest]
    if d[0] < 1e-12:
        weights = (d < 1e-12).astype(np.float64)
    else:
        weights = 1.0 / d
    return nearest, weights / weights.sum()


def resample(trial: RawTrial, target_rate: float) -> RawTrial:
    """Decimate a trial to ``target_rate`` by FFT-domain truncation.

    Output length is floor(T * target / source). Upsampling is rejected.
    """
    if not target_rate > 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate > trial.sample_rate:
        raise ValueError(
            f"cannot upsample from {trial.sample_rate} Hz to {target_rate} Hz"
        )
    if target_rate == trial.sample_rate:
        return trial
    t_in = trial.n_samples
    t_out = int(np.floor(t_in * target_rate / trial.sample_rate))
    if t_out == 0:
        raise ValueError("trial too short for target rate")
    spectrum = np.fft.rfft(trial.data, axis=1)
    kept = spectrum[:, : t_out // 2 + 1]
    out = np.fft.irfft(kept, n=t_out, axis=1) * (t_out / t_in)
    return replace(trial, sample_rate=float(target_rate), data=out.astype(trial.data.dtype))


def bandpass(trial: RawTrial, lo: float, hi: float) -> RawTrial:
    """Zero-phase brick-wall band-pass: keep bins strictly inside (lo, hi)."""
    if not 0 <= lo < hi:
        raise ValueError(f"need 0 <= lo < hi, got ({lo}, {hi})")
    if hi > trial.nyquist:
        raise ValueError(f"hi = {hi} Hz exceeds Nyquist {trial.nyquist} Hz")
    freqs = np.fft.rfftfreq(trial.n_samples, d=1.0 / trial.sample_rate)
    spectrum = np.fft.rfft(trial.data, axis=1)
    keep = (freqs > lo) & (freqs < hi)
    spectrum[:, ~keep] = 0.0
    out = np.fft.irfft(spectrum, n=trial.n_samples, axis=1)
    return replace(trial, data=out.astype(trial.data.dtype))


def segment(trial: RawTrial, window_samples: int = DEFAULT_WINDOW_SAMPLES) -> list[Segment]:
    """Split a standardized trial into non-overlapping fixed-length windows.

    The trailing remainder shorter than one window is dropped. A trial
    shorter than one window yields an empty list.
    """
    if window_samples <= 0:
        raise ValueError("window_samples must be positive")
    if trial.data.shape[0] != MONTAGE_SIZE:
        raise ValueError(
            f"segmentation expects {MONTAGE_SIZE}-channel trials, got {trial.data.shape[0]}"
        )
    n = trial.n_samples // window_samples
    return [
        Segment(
            data=trial.data[:, i * window_samples : (i + 1) * window_samples],
            trial_id=trial.trial_id,
            index=i,
        )
        for i in range(n)
    ]


def sample_mask_band(
    rng: np.random.Generator,
    cutoff_lo: float = 1.0,
    cutoff_hi: float = 50.0,
    band_width: float = 6.0,
) -> BandMask:
    """Draw a band of fixed width uniformly inside the cutoff range."""
    if band_width > cutoff_hi - cutoff_lo:
        raise ValueError(
            f"band_width {band_width} exceeds cutoff range {cutoff_hi - cutoff_lo}"
        )
    f_min = float(rng.uniform(cutoff_lo, cutoff_hi - band_width))
    return BandMask(f_min=f_min, f_max=f_min + band_width)


def spectral_mask(
    seg: Segment, band: BandMask, sample_rate: float = DEFAULT_RATE_HZ
) -> Segment:
    """Zero all real-FFT bins with center frequency in [f_min, f_max], per channel."""
    nyquist = sample_rate / 2.0
    if band.f_max > nyquist:
        raise ValueError(f"band {band} exceeds Nyquist {nyquist} Hz")
    freqs = np.fft.rfftfreq(seg.window, d=1.0 / sample_rate)
    spectrum = np.fft.rfft(seg.data, axis=1)
    kill = (freqs >= band.f_min) & (freqs <= band.f_max)
    spectrum[:, kill] = 0.0
    out = np.fft.irfft(spectrum, n=seg.window, axis=1).astype(seg.data.dtype)
    return replace(seg, data=out)
