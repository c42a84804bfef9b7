"""Unit-norm sentence vectors for instructions and class targets.

Vectors come either from a precomputed store file (written offline by the
exporter tool) or from a deterministic pseudo-embedding fallback, so the whole
pipeline runs with zero external artifacts.

Pseudo-embedding pipeline (fixed for cross-platform reproducibility):
FNV-1a 64-bit hash of the UTF-8 text, XORed with the caller's seed, feeds a
splitmix64 stream; consecutive 53-bit uniforms are turned into Gaussians via
Box-Muller; the resulting vector is l2-normalized.

Store file format ("EMBTXT v1"): UTF-8 text, first line
``dim=<k> encoder=<tag>``, then one row per text: the JSON-quoted text, a tab,
and k space-separated decimal floats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

DEFAULT_DIM = 768

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class EmbeddingSource(Enum):
    STORE = "store"
    PSEUDO = "pseudo"


@dataclass(frozen=True)
class TextEmbedding:
    text: str
    vector: np.ndarray  # (k,), unit norm
    source: EmbeddingSource

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        object.__setattr__(self, "vector", vec)
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-5:
            raise ValueError(f"embedding for {self.text!r} has norm {norm}, expected 1")

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable text -> unit vector map loaded from an EMBTXT file."""

    dim: int
    entries: dict[str, np.ndarray]
    encoder_tag: str

    def __contains__(self, text: str) -> bool:
        return text in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def pseudo_embed(text: str, seed: int, dim: int = DEFAULT_DIM) -> TextEmbedding:
    """Deterministic unit-norm Gaussian direction derived from (text, seed)."""
    if not text:
        raise ValueError("cannot embed empty text")
    state = fnv1a64(text) ^ (seed & _MASK64)
    values = np.empty(dim, dtype=np.float64)
    i = 0
    while i < dim:
        state, a = _splitmix64(state)
        state, b = _splitmix64(state)
        u1 = ((a >> 11) + 1) * 2.0**-53  # in (0, 1], keeps log finite
        u2 = (b >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log(u1))
        values[i] = r * math.cos(2.0 * math.pi * u2)
        if i + 1 < dim:
            values[i + 1] = r * math.sin(2.0 * math.pi * u2)
        i += 2
    values /= np.linalg.norm(values)
    return TextEmbedding(text=text, vector=values, source=EmbeddingSource.PSEUDO)


def embed(
    text: str,
    store: EmbeddingStore | None = None,
    fallback_seed: int | None = None,
    dim: int | None = None,
) -> TextEmbedding:
    """Look ``text`` up in the store, else pseudo-embed, else fail loudly."""
    if not text:
        raise ValueError("cannot embed empty text")
    if store is not None and text in store.entries:
        return TextEmbedding(
            text=text, vector=store.entries[text], source=EmbeddingSource.STORE
        )
    if fallback_seed is not None:
        if dim is None:
            dim = store.dim if store is not None else DEFAULT_DIM
        return pseudo_embed(text, fallback_seed, dim=dim)
    raise KeyError(f"text {text!r} not in embedding store and no fallback seed given")


class TextEmbedder:
    """Callable embedding source: store lookup with optional pseudo fallback."""

    def __init__(
        self,
        store: EmbeddingStore | None = None,
        fallback_seed: int | None = None,
        dim: int | None = None,
    ):
        self.store = store
        self.fallback_seed = fallback_seed
        self.dim = dim if dim is not None else (store.dim if store else DEFAULT_DIM)

    def __call__(self, text: str) -> TextEmbedding:
        return embed(text, self.store, self.fallback_seed, dim=self.dim)

    def describe(self) -> dict:
        """Provenance record stored in checkpoints."""
        if self.store is not None:
            return {"kind": "store", "encoder_tag": self.store.encoder_tag, "dim": self.dim}
        return {"kind": "pseudo", "seed": self.fallback_seed, "dim": self.dim}


def load_store(path: str | Path) -> EmbeddingStore:
    """Parse an EMBTXT v1 file; every vector is re-normalized on load."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty store file")
    header = lines[0].split()
    fields = dict(part.split("=", 1) for part in header if "=" in part)
    if "dim" not in fields:
        raise ValueError(f"{path}:1: header must declare dim=<k>")
    dim = int(fields["dim"])
    encoder_tag = fields.get("encoder", "unknown")
    entries: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            quoted, _, rest = line.partition("\t")
            text = json.loads(quoted)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: malformed quoted text") from exc
        vec = np.array(rest.split(), dtype=np.float64)
        if vec.shape[0] != dim:
            raise ValueError(
                f"{path}:{lineno}: entry has dimension {vec.shape[0]}, header says {dim}"
            )
        if text in entries:
            raise ValueError(f"{path}:{lineno}: duplicate text {text!r}")
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError(f"{path}:{lineno}: zero vector for {text!r}")
        # Keep already-normalized rows bit-stable so save/load round-trips.
        entries[text] = vec if abs(norm - 1.0) < 1e-12 else vec / norm
    return EmbeddingStore(dim=dim, entries=entries, encoder_tag=encoder_tag)


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write an EMBTXT v1 file (vectors printed with full float precision)."""
    lines = [f"dim={store.dim} encoder={store.encoder_tag}"]
    for text, vec in store.entries.items():
        values = " ".join(repr(float(v)) for v in vec)
        lines.append(f"{json.dumps(text)}\t{values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
