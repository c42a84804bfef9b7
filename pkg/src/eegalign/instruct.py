"""Instruction-conditioned head over encoder states.

An instruction sentence vector modulates the concatenated branch states
feature-wise (FiLM), a small stack of learnable queries cross-attends to the
modulated sequence, and the pooled query outputs are projected into the text
embedding space. Classification is nearest class prototype by cosine, and
training minimizes one minus the cosine to the ground-truth prototype.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .textembed import TextEmbedding

DEFAULT_INSTRUCTION = "Default"  # conditioning text used when no instruction is given

_CATALOG_RESOURCE = "instruction_catalog.json"


@dataclass
class InstructConfig:
    n_queries: int = 8
    qformer_layers: int = 4
    text_dim: int = 768
    ff_scale: int = 4
    dropout: float = 0.1
    query_self_attention: bool = True
    head: str = "prototype"  # or "softmax" for the label-ID ablation

    def __post_init__(self) -> None:
        if self.n_queries < 1 or self.qformer_layers < 1:
            raise ValueError("need at least one query and one layer")
        if self.head not in ("prototype", "softmax"):
            raise ValueError(f"unknown head variant {self.head!r}")


class FiLM(nn.Module):
    """Feature-wise affine modulation driven by an instruction embedding.

    tanh(W e_ins + b) yields per-feature (gamma, beta) in R^d each, broadcast
    over all sequence positions: out = gamma * m + beta.
    """

    def __init__(self, d: int, text_dim: int):
        super().__init__()
        self.proj = nn.Linear(text_dim, 2 * d)

    def gamma_beta(self, e_ins: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        gb = torch.tanh(self.proj(e_ins))
        return gb.chunk(2, dim=-1)

    def forward(self, m: torch.Tensor, e_ins: torch.Tensor) -> torch.Tensor:
        squeeze = m.ndim == 2
        if squeeze:
            m = m[None]
        if e_ins.ndim == 1:
            e_ins = e_ins[None].expand(m.shape[0], -1)
        gamma, beta = self.gamma_beta(e_ins)
        out = gamma[:, None, :] * m + beta[:, None, :]
        return out[0] if squeeze else out


class CrossAttention(nn.Module):
    """Single-head cross-attention: queries attend to a key/value sequence."""

    def __init__(self, d: int):
        super().__init__()
        self.w_q = nn.Linear(d, d, bias=False)
        self.w_k = nn.Linear(d, d, bias=False)
        self.w_v = nn.Linear(d, d, bias=False)
        self.scale = 1.0 / math.sqrt(d)

    def forward(
        self, queries: torch.Tensor, memory: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        scores = self.w_q(queries) @ self.w_k(memory).transpose(-2, -1) * self.scale
        weights = torch.softmax(scores, dim=-1)
        return weights @ self.w_v(memory), weights


class QFormerLayer(nn.Module):
    def __init__(self, d: int, config: InstructConfig):
        super().__init__()
        self.use_self_attention = config.query_self_attention
        if self.use_self_attention:
            self.norm_sa = nn.LayerNorm(d)
            self.self_attn = CrossAttention(d)
        self.norm_q = nn.LayerNorm(d)
        self.cross = CrossAttention(d)
        self.norm_ff = nn.LayerNorm(d)
        self.ff = nn.Sequential(
            nn.Linear(d, config.ff_scale * d),
            nn.GELU(),
            nn.Dropout(config.dropout),
            nn.Linear(config.ff_scale * d, d),
        )
        self.drop = nn.Dropout(config.dropout)

    def forward(self, queries: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        if self.use_self_attention:
            normed = self.norm_sa(queries)
            sa_out, _ = self.self_attn(normed, normed)
            queries = queries + self.drop(sa_out)
        cross_out, self.last_attention = self.cross(self.norm_q(queries), memory)
        queries = queries + self.drop(cross_out)
        return queries + self.drop(self.ff(self.norm_ff(queries)))


class QFormer(nn.Module):
    """Learnable query vectors refined by cross-attention over EEG states."""

    def __init__(self, d: int, config: InstructConfig):
        super().__init__()
        self.config = config
        self.queries = nn.Parameter(torch.randn(config.n_queries, d) * 0.02)
        self.layers = nn.ModuleList(
            QFormerLayer(d, config) for _ in range(config.qformer_layers)
        )
        self.final_norm = nn.LayerNorm(d)

    def forward(self, memory: torch.Tensor) -> torch.Tensor:
        squeeze = memory.ndim == 2
        if squeeze:
            memory = memory[None]
        q = self.queries[None].expand(memory.shape[0], -1, -1)
        for layer in self.layers:
            q = layer(q, memory)
        q = self.final_norm(q)
        return q[0] if squeeze else q


class AggregateHead(nn.Module):
    """Mean-pool the query outputs, then a two-layer MLP into text space."""

    def __init__(self, d: int, text_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(d, d)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(d, text_dim)

    def forward(self, queries: torch.Tensor) -> torch.Tensor:
        pooled = queries.mean(dim=-2)
        return self.fc2(self.act(self.fc1(pooled)))


class SoftmaxHead(nn.Module):
    """Label-ID ablation head: pooled queries -> class logits."""

    def __init__(self, d: int, n_classes: int):
        super().__init__()
        self.fc = nn.Linear(d, n_classes)

    def forward(self, queries: torch.Tensor) -> torch.Tensor:
        return self.fc(queries.mean(dim=-2))


class InstructionHead(nn.Module):
    """FiLM conditioning + Q-Former + aggregation into the text space."""

    def __init__(self, d: int, config: InstructConfig | None = None, n_classes: int = 0):
        super().__init__()
        self.config = config or InstructConfig()
        self.film = FiLM(d, self.config.text_dim)
        self.qformer = QFormer(d, self.config)
        if self.config.head == "softmax":
            if n_classes < 2:
                raise ValueError("softmax head needs n_classes >= 2")
            self.head: nn.Module = SoftmaxHead(d, n_classes)
        else:
            self.head = AggregateHead(d, self.config.text_dim)

    def forward(self, m: torch.Tensor, e_ins: torch.Tensor) -> torch.Tensor:
        return self.head(self.qformer(self.film(m, e_ins)))


@dataclass(frozen=True)
class PrototypeBank:
    """Ordered class names with their unit-norm target text embeddings."""

    classes: tuple[str, ...]
    vectors: torch.Tensor  # (|C|, k)

    def __post_init__(self) -> None:
        if len(self.classes) != len(set(self.classes)):
            raise ValueError("class names must be unique")
        if self.vectors.shape[0] != len(self.classes):
            raise ValueError("one prototype row per class required")
        norms = self.vectors.norm(dim=1)
        if not torch.allclose(norms, torch.ones_like(norms), atol=1e-5):
            raise ValueError("prototype rows must be unit-norm within 1e-5")

    @classmethod
    def from_embeddings(cls, embeddings: list[TextEmbedding]) -> "PrototypeBank":
        vectors = torch.from_numpy(np.stack([e.vector for e in embeddings]))
        return cls(classes=tuple(e.text for e in embeddings), vectors=vectors)

    def index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise KeyError(f"class {name!r} not in prototype bank {self.classes}") from None

    @property
    def size(self) -> int:
        return len(self.classes)


def alignment_loss(
    h: torch.Tensor, labels: str | list[str], bank: PrototypeBank
) -> torch.Tensor:
    """(1/|C|) * (1 - cos(h, prototype of the true class)), batch-averaged."""
    if isinstance(labels, str):
        labels = [labels]
        h = h[None] if h.ndim == 1 else h
    if h.shape[0] != len(labels):
        raise ValueError("one label per sample required")
    norms = h.norm(dim=-1)
    if (norms == 0).any():
        raise ValueError("alignment loss undefined for zero vectors")
    idx = torch.tensor([bank.index(y) for y in labels], device=h.device)
    protos = bank.vectors.to(h.dtype)[idx]
    cos = (h * protos).sum(dim=-1) / norms
    return ((1.0 - cos) / bank.size).mean()


@dataclass(frozen=True)
class Prediction:
    class_name: str
    scores: dict[str, float]  # per-class cosine similarity


def predict(h: torch.Tensor, bank: PrototypeBank) -> Prediction:
    """Nearest prototype by cosine; ties broken by bank order."""
    if bank.size == 0:
        raise ValueError("empty prototype bank")
    norm = float(h.norm())
    if norm == 0:
        raise ValueError("cannot classify a zero vector")
    cos = (bank.vectors.to(h.dtype) @ h / norm).detach().cpu().numpy()
    winner = int(np.argmax(cos))
    return Prediction(
        class_name=bank.classes[winner],
        scores={name: float(c) for name, c in zip(bank.classes, cos)},
    )


class InstructionLevel(Enum):
    NONE = "none"
    TASK = "task"
    TASK_AND_TARGETS = "task_and_targets"


@dataclass(frozen=True)
class CatalogEntry:
    """Instruction strings and decoding targets for one dataset."""

    name: str
    task_instruction: str
    task_and_targets_instruction: str
    targets: tuple[str, ...]

    def instruction(self, level: InstructionLevel) -> str:
        if level is InstructionLevel.NONE:
            return DEFAULT_INSTRUCTION
        if level is InstructionLevel.TASK:
            return self.task_instruction
        return self.task_and_targets_instruction

    def training_instructions(self) -> tuple[str, str]:
        return (self.task_instruction, self.task_and_targets_instruction)


def load_catalog(path: str | Path) -> dict[str, CatalogEntry]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    entries: dict[str, CatalogEntry] = {}
    for item in raw["datasets"]:
        entry = CatalogEntry(
            name=item["name"],
            task_instruction=item["instructions"]["task"],
            task_and_targets_instruction=item["instructions"]["task_and_targets"],
            targets=tuple(item["targets"]),
        )
        if entry.name in entries:
            raise ValueError(f"duplicate catalog entry {entry.name!r}")
        entries[entry.name] = entry
    return entries


def save_catalog(entries: dict[str, CatalogEntry], path: str | Path) -> None:
    payload = {
        "format": "CATALOG v1",
        "datasets": [
            {
                "name": e.name,
                "instructions": {
                    "task": e.task_instruction,
                    "task_and_targets": e.task_and_targets_instruction,
                },
                "targets": list(e.targets),
            }
            for e in entries.values()
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def default_catalog() -> dict[str, CatalogEntry]:
    """The bundled instruction/target catalog for the standard datasets."""
    ref = resources.files("eegalign.resources").joinpath(_CATALOG_RESOURCE)
    with resources.as_file(ref) as path:
        return load_catalog(path)
