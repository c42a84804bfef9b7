"""Dual-branch transformer pretraining core.

A bidirectional branch reconstructs randomly masked token positions from
context; a causal branch predicts the next raw slice under a future-blocking
attention mask. Both decode through one shared two-layer MLP back to raw
65-channel signal slices, and the joint objective is a weighted sum of the
two reconstruction losses.

Attention masking uses additive -inf logits, so blocked positions receive
exactly zero weight and causal outputs are bit-invariant to future tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .montage import MONTAGE_SIZE
from .tokenizer import ConvTokenizer, TokenizerConfig, TokenSequence


@dataclass
class EncoderConfig:
    layers: int = 2  # paper-scale runs use 12
    d: int = 256
    heads: int = 8
    ff_scale: int = 4
    dropout: float = 0.1
    mask_ratio: float = 0.5
    lambda_ctx: float = 1.0
    lambda_cau: float = 1.0
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if self.d % self.heads != 0:
            raise ValueError(f"d = {self.d} not divisible by heads = {self.heads}")
        if not 0 < self.mask_ratio < 1:
            raise ValueError(f"mask_ratio must be in (0, 1), got {self.mask_ratio}")
        if self.lambda_ctx < 0 or self.lambda_cau < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class MaskSpec:
    """The set of token positions replaced by the mask embedding."""

    masked_positions: frozenset[int]
    n_tokens: int

    def __post_init__(self) -> None:
        if any(i < 0 or i >= self.n_tokens for i in self.masked_positions):
            raise ValueError("masked positions out of range")

    def bool_tensor(self, device=None) -> torch.Tensor:
        mask = torch.zeros(self.n_tokens, dtype=torch.bool, device=device)
        mask[list(self.masked_positions)] = True
        return mask


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = d // heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.out = nn.Linear(d, d)
        self.drop = nn.Dropout(dropout)

    def forward(
        self, x: torch.Tensor, attn_mask: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        b, n, d = x.shape
        q = self.q(x).view(b, n, self.heads, self.head_dim).transpose(1, 2)
        k = self.k(x).view(b, n, self.heads, self.head_dim).transpose(1, 2)
        v = self.v(x).view(b, n, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if attn_mask is not None:
            scores = scores + attn_mask
        weights = torch.softmax(scores, dim=-1)
        ctx = self.drop(weights) @ v
        ctx = ctx.transpose(1, 2).reshape(b, n, d)
        return self.out(ctx), weights


class TransformerLayer(nn.Module):
    """Pre-norm self-attention + feed-forward block with residuals."""

    def __init__(self, d: int, heads: int, ff_scale: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(d)
        self.attn = MultiHeadSelfAttention(d, heads, dropout)
        self.norm2 = nn.LayerNorm(d)
        self.ff = nn.Sequential(
            nn.Linear(d, ff_scale * d),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(ff_scale * d, d),
        )
        self.drop = nn.Dropout(dropout)

    def forward(
        self, x: torch.Tensor, attn_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        attn_out, self.last_attention = self.attn(self.norm1(x), attn_mask)
        x = x + self.drop(attn_out)
        return x + self.drop(self.ff(self.norm2(x)))


class TransformerBranch(nn.Module):
    def __init__(self, config: EncoderConfig, causal: bool):
        super().__init__()
        self.causal = causal
        self.layers = nn.ModuleList(
            TransformerLayer(config.d, config.heads, config.ff_scale, config.dropout)
            for _ in range(config.layers)
        )
        self.final_norm = nn.LayerNorm(config.d)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        attn_mask = None
        if self.causal:
            n = x.shape[1]
            attn_mask = torch.full((n, n), float("-inf"), dtype=x.dtype, device=x.device)
            attn_mask = torch.triu(attn_mask, diagonal=1)
        for layer in self.layers:
            x = layer(x, attn_mask)
        return self.final_norm(x)


class SliceDecoder(nn.Module):
    """Shared two-layer MLP mapping a token state back to a raw signal slice."""

    def __init__(self, d: int, slice_width: int):
        super().__init__()
        self.slice_width = slice_width
        self.fc1 = nn.Linear(d, d)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(d, MONTAGE_SIZE * slice_width)

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(state)))

    def decode(self, state: torch.Tensor) -> torch.Tensor:
        """Decode to the (..., 65, slice_width) raw slice layout."""
        flat = self.forward(state)
        return flat.view(*flat.shape[:-1], MONTAGE_SIZE, self.slice_width)


class DualEncoder(nn.Module):
    """Tokenizer, positional/mask embeddings, both branches, shared decoder."""

    def __init__(
        self,
        config: EncoderConfig | None = None,
        tokenizer_config: TokenizerConfig | None = None,
    ):
        super().__init__()
        self.config = config or EncoderConfig()
        tok_cfg = tokenizer_config or TokenizerConfig(d=self.config.d)
        if tok_cfg.d != self.config.d:
            raise ValueError(
                f"tokenizer d = {tok_cfg.d} must match encoder d = {self.config.d}"
            )
        if tok_cfg.window_samples % tok_cfg.tokens_per_segment != 0:
            raise ValueError("segment window must divide evenly into token slices")
        self.tokenizer = ConvTokenizer(tok_cfg)
        self.slice_width = tok_cfg.window_samples // tok_cfg.tokens_per_segment
        self.pos_embedding = nn.Parameter(
            torch.randn(self.config.max_tokens, self.config.d) * 0.02
        )
        self.mask_embedding = nn.Parameter(torch.zeros(self.config.d))
        self.bidirectional = TransformerBranch(self.config, causal=False)
        self.causal = TransformerBranch(self.config, causal=True)
        self.decoder = SliceDecoder(self.config.d, self.slice_width)

    def _add_positions(self, tokens: torch.Tensor) -> torch.Tensor:
        n = tokens.shape[-2]
        if n > self.config.max_tokens:
            raise ValueError(
                f"sequence of {n} tokens exceeds max_tokens = {self.config.max_tokens}"
            )
        return tokens + self.pos_embedding[:n]

    def forward_bidirectional(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, N, d) tokens -> (B, N, d) states, full attention."""
        return self.bidirectional(self._add_positions(tokens))

    def forward_causal(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, N, d) tokens -> (B, N, d) states; position i sees only 0..i."""
        return self.causal(self._add_positions(tokens))

    def encode_for_tuning(self, tokens: torch.Tensor) -> torch.Tensor:
        """Concatenate the two branches' states along the sequence axis.

        No random masking is applied; output is (B, 2N, d) with the
        bidirectional states first.
        """
        return torch.cat(
            [self.forward_bidirectional(tokens), self.forward_causal(tokens)], dim=-2
        )

    def apply_random_mask(
        self, sequence: TokenSequence, ratio: float, rng: np.random.Generator
    ) -> tuple[TokenSequence, MaskSpec]:
        """Replace round(ratio*N) positions with the learnable mask embedding."""
        n = len(sequence)
        if n == 0:
            raise ValueError("cannot mask an empty token sequence")
        if not 0 < ratio < 1:
            raise ValueError(f"mask ratio must be in (0, 1), got {ratio}")
        count = int(round(ratio * n))
        chosen = rng.choice(n, size=count, replace=False)
        spec = MaskSpec(masked_positions=frozenset(int(i) for i in chosen), n_tokens=n)
        tokens = sequence.tokens.clone()
        tokens[spec.bool_tensor(device=tokens.device)] = self.mask_embedding.to(tokens.dtype)
        return TokenSequence(tokens=tokens, provenance=sequence.provenance), spec

    def mask_token_batch(
        self, tokens: torch.Tensor, ratio: float, rng: np.random.Generator
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Batched masking: (B, N, d) -> masked copy plus a (B, N) bool mask."""
        b, n = tokens.shape[:2]
        count = int(round(ratio * n))
        mask = torch.zeros(b, n, dtype=torch.bool, device=tokens.device)
        for i in range(b):
            mask[i, rng.choice(n, size=count, replace=False)] = True
        out = tokens.clone()
        out[mask] = self.mask_embedding.to(tokens.dtype)
        return out, mask


def slice_targets(segments: torch.Tensor, tokens_per_segment: int) -> torch.Tensor:
    """Raw reconstruction targets aligned with token order.

    Token j of a segment covers the j-th contiguous block of columns, so a
    (B, S, 65, t) stack becomes (B, S*tokens_per_segment, 65*(t/tokens)).
    """
    b, s, c, t = segments.shape
    if t % tokens_per_segment != 0:
        raise ValueError("segment window must divide evenly into token slices")
    width = t // tokens_per_segment
    x = segments.reshape(b, s, c, tokens_per_segment, width)
    x = x.permute(0, 1, 3, 2, 4)  # (B, S, tokens, 65, width)
    return x.reshape(b, s * tokens_per_segment, c * width)


def loss_ctx(
    states: torch.Tensor,
    mask: torch.Tensor | MaskSpec,
    targets: torch.Tensor,
    decoder: SliceDecoder,
) -> torch.Tensor:
    """Masked-position reconstruction loss, averaged over masked positions.

    ``states``/``targets`` are (B, N, d) / (B, N, 650); ``mask`` is a (B, N)
    bool tensor (or a MaskSpec for a single sequence). Per-sample means are
    averaged over the batch.
    """
    if isinstance(mask, MaskSpec):
        mask = mask.bool_tensor(device=states.device)
    if states.ndim == 2:
        states, targets = states[None], targets[None]
    if mask.ndim == 1:
        mask = mask[None]
    if mask.sum() == 0:
        raise ValueError("empty mask: no positions to reconstruct")
    per_position = ((decoder(states) - targets) ** 2).sum(dim=-1)  # (B, N)
    masked_sum = (per_position * mask).sum(dim=1)
    return (masked_sum / mask.sum(dim=1)).mean()


def loss_cau(
    states: torch.Tensor, targets: torch.Tensor, decoder: SliceDecoder
) -> torch.Tensor:
    """Next-slice prediction loss: position i predicts the raw slice i+1."""
    if states.ndim == 2:
        states, targets = states[None], targets[None]
    n = states.shape[1]
    if n < 2:
        raise ValueError("causal loss needs at least 2 tokens")
    pred = decoder(states[:, :-1])
    diff = ((pred - targets[:, 1:]) ** 2).sum(dim=-1)  # (B, N-1)
    return diff.mean(dim=1).mean()


def pretrain_loss(
    ctx: torch.Tensor | float, cau: torch.Tensor | float, config: EncoderConfig
) -> torch.Tensor:
    """Joint objective: lambda_ctx * ctx + lambda_cau * cau."""
    total = config.lambda_ctx * ctx + config.lambda_cau * cau
    if not torch.isfinite(torch.as_tensor(total)).all():
        raise FloatingPointError("pretraining loss is not finite")
    return torch.as_tensor(total)
