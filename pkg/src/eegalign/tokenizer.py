"""Convolutional tokenizer: 65 x t segments -> token sequences in R^d.

Stages per segment: temporal convolution (kernel width 40, time padding 20,
stride 1), depthwise spatial convolution collapsing the 65-channel axis,
batch normalization over feature maps, and width-10 average pooling. A
65 x 100 segment yields 10 tokens of dimension d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .montage import MONTAGE_SIZE


@dataclass
class TokenizerConfig:
    d: int = 256
    temporal_width: int = 40
    temporal_pad: int = 20
    pool_width: int = 10
    window_samples: int = 100

    def __post_init__(self) -> None:
        if self.d <= 0:
            raise ValueError("token dimension must be positive")
        if self.tokens_per_segment <= 0:
            raise ValueError("configuration yields zero tokens per segment")

    @property
    def conv_out_length(self) -> int:
        return self.window_samples + 2 * self.temporal_pad - self.temporal_width + 1

    @property
    def tokens_per_segment(self) -> int:
        return self.conv_out_length // self.pool_width


@dataclass(frozen=True)
class TokenProvenance:
    trial_id: str
    segment_index: int
    position: int  # within-segment token ordinal


@dataclass
class TokenSequence:
    """Ordered token embeddings with per-token provenance."""

    tokens: torch.Tensor  # (N, d)
    provenance: list[TokenProvenance] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.tokens.ndim != 2:
            raise ValueError(f"tokens must be (N, d), got {tuple(self.tokens.shape)}")
        if not torch.isfinite(self.tokens).all():
            raise ValueError("token sequence contains NaN/Inf")
        if self.provenance and len(self.provenance) != self.tokens.shape[0]:
            raise ValueError("provenance length does not match token count")

    def __len__(self) -> int:
        return self.tokens.shape[0]


class ConvTokenizer(nn.Module):
    """Temporal conv -> depthwise spatial conv -> batchnorm -> average pool."""

    def __init__(self, config: TokenizerConfig | None = None):
        super().__init__()
        self.config = config or TokenizerConfig()
        c = self.config
        self.temporal = nn.Conv2d(
            1, c.d, kernel_size=(1, c.temporal_width), padding=(0, c.temporal_pad)
        )
        self.spatial = nn.Conv2d(c.d, c.d, kernel_size=(MONTAGE_SIZE, 1), groups=c.d)
        self.norm = nn.BatchNorm2d(c.d)
        self.pool = nn.AvgPool2d(kernel_size=(1, c.pool_width), stride=(1, c.pool_width))

    def forward(self, segments: torch.Tensor) -> torch.Tensor:
        """(B, S, 65, t) batches of per-trial segments -> (B, S*tokens, d)."""
        if segments.ndim != 4 or segments.shape[2] != MONTAGE_SIZE:
            raise ValueError(
                f"expected (B, S, {MONTAGE_SIZE}, t) segments, got {tuple(segments.shape)}"
            )
        if segments.shape[3] != self.config.window_samples:
            raise ValueError(
                f"segment window {segments.shape[3]} != configured {self.config.window_samples}"
            )
        b, s = segments.shape[:2]
        x = segments.reshape(b * s, 1, MONTAGE_SIZE, segments.shape[3])
        x = self.temporal(x)            # (B*S, d, 65, L)
        x = self.spatial(x)             # (B*S, d, 1, L)
        x = self.norm(x)
        x = self.pool(x)                # (B*S, d, 1, tokens_per_segment)
        x = x.squeeze(2).transpose(1, 2)  # (B*S, tokens_per_segment, d)
        return x.reshape(b, s * self.config.tokens_per_segment, self.config.d)


def segments_to_tensor(
    segment_stacks: np.ndarray | list, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Stack numpy segment data into a (B, S, 65, t) tensor."""
    arr = np.asarray(segment_stacks)
    if arr.ndim == 3:  # single trial (S, 65, t)
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)


def tokenize(
    segments: list,
    tokenizer: ConvTokenizer,
    training: bool = False,
) -> TokenSequence:
    """Run the tokenizer over one trial's segments, tracking provenance.

    Consecutive segments' tokens are concatenated in segment order.
    """
    if not segments:
        raise ValueError("cannot tokenize an empty segment list")
    cfg = tokenizer.config
    for seg in segments:
        if seg.data.shape != (MONTAGE_SIZE, cfg.window_samples):
            raise ValueError(
                f"segment {seg.trial_id}[{seg.index}] has shape {seg.data.shape}, "
                f"expected ({MONTAGE_SIZE}, {cfg.window_samples})"
            )
    dtype = next(tokenizer.parameters()).dtype
    stack = np.stack([np.asarray(seg.data, dtype=np.float64) for seg in segments])
    batch = segments_to_tensor(stack[None], dtype=dtype)
    mode = tokenizer.training
    tokenizer.train(training)
    try:
        if training:
            tokens = tokenizer(batch)[0]
        else:
            with torch.no_grad():
                tokens = tokenizer(batch)[0]
    finally:
        tokenizer.train(mode)
    provenance = [
        TokenProvenance(trial_id=seg.trial_id, segment_index=seg.index, position=j)
        for seg in segments
        for j in range(cfg.tokens_per_segment)
    ]
    return TokenSequence(tokens=tokens, provenance=provenance)
