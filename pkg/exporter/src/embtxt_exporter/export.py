"""Run a frozen sentence encoder over a text list and write an EMBTXT store.

Two encoder variants are supported, both via the transformers AutoModel API:

* ``bert_cls``  -- final-layer hidden state of the [CLS] token
  (default model: bert-base-uncased).
* ``sbert_mean`` -- attention-mask-weighted mean over final-layer token
  states (default model: sentence-transformers/all-mpnet-base-v2).

Model revisions must be pinned explicitly in the job: stores are meant to be
reproducible, so there is no floating "latest". Every vector is l2-normalized
before writing.

Store format ("EMBTXT v1"): line 1 is ``dim=<k> encoder=<tag>``; each
following line is the JSON-quoted text, a tab, and k space-separated floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ENCODERS = {
    "bert_cls": "bert-base-uncased",
    "sbert_mean": "sentence-transformers/all-mpnet-base-v2",
}
EXPECTED_DIM = 768  # hidden size of both default encoders


class ExportError(RuntimeError):
    pass


class ModelUnavailableError(ExportError):
    """Raised when encoder weights cannot be loaded or downloaded."""


@dataclass(frozen=True)
class ExportJob:
    texts: tuple[str, ...]
    encoder: str  # key in ENCODERS
    out_path: Path
    revision: str  # pinned model revision (commit hash or tag)
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.encoder not in ENCODERS:
            raise ExportError(
                f"unknown encoder {self.encoder!r} (choose from {sorted(ENCODERS)})"
            )
        if not self.texts:
            raise ExportError("no texts to export")
        if any(not t for t in self.texts):
            raise ExportError("empty text in export list")
        if len(set(self.texts)) != len(self.texts):
            dupes = sorted({t for t in self.texts if self.texts.count(t) > 1})
            raise ExportError(f"duplicate texts: {dupes}")
        if not self.revision:
            raise ExportError(
                "a pinned model revision is required (stores must be reproducible)"
            )

    @property
    def model_id(self) -> str:
        return ENCODERS[self.encoder]

    @property
    def encoder_tag(self) -> str:
        return f"{self.encoder}:{self.model_id}@{self.revision}"


def _load_model(job: ExportJob):
    import torch
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(job.model_id, revision=job.revision)
        model = AutoModel.from_pretrained(job.model_id, revision=job.revision)
    except Exception as exc:
        raise ModelUnavailableError(
            f"cannot load {job.model_id}@{job.revision}: {exc}"
        ) from exc
    model.eval()
    return torch, tokenizer, model


def encode_with_transformer(job: ExportJob) -> np.ndarray:
    """(n_texts, hidden) matrix from the pinned frozen encoder."""
    torch, tokenizer, model = _load_model(job)
    rows = []
    with torch.no_grad():
        for start in range(0, len(job.texts), job.batch_size):
            batch = list(job.texts[start : start + job.batch_size])
            enc = tokenizer(batch, padding=True, truncation=True, return_tensors="pt")
            hidden = model(**enc).last_hidden_state  # (B, T, H)
            if job.encoder == "bert_cls":
                vecs = hidden[:, 0, :]
            else:  # sbert_mean
                mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                vecs = (hidden * mask).sum(dim=1) / mask.sum(dim=1)
            rows.append(vecs.double().cpu().numpy())
    return np.concatenate(rows, axis=0)


def write_store(
    texts: Sequence[str], matrix: np.ndarray, encoder_tag: str, out_path: Path
) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != len(texts):
        raise ExportError(f"matrix shape {matrix.shape} does not match {len(texts)} texts")
    dim = matrix.shape[1]
    lines = [f"dim={dim} encoder={encoder_tag}"]
    for text, row in zip(texts, matrix):
        norm = np.linalg.norm(row)
        if norm == 0:
            raise ExportError(f"encoder produced a zero vector for {text!r}")
        unit = row / norm
        lines.append(json.dumps(text) + "\t" + " ".join(repr(float(v)) for v in unit))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_export(
    job: ExportJob,
    encode_fn: Callable[[ExportJob], np.ndarray] | None = None,
) -> Path:
    """Encode all texts and write the store; returns the output path.

    ``encode_fn`` is injectable so the pipeline is testable without model
    weights; the default runs the pinned transformer.
    """
    matrix = (encode_fn or encode_with_transformer)(job)
    write_store(job.texts, matrix, job.encoder_tag, job.out_path)
    return job.out_path


def texts_from_file(path: Path) -> tuple[str, ...]:
    """One text per line; blank lines are skipped."""
    lines = [l.strip() for l in path.read_text(encoding="utf-8").splitlines()]
    return tuple(l for l in lines if l)


def texts_from_catalog(path: Path) -> tuple[str, ...]:
    """All instruction strings and targets from a CATALOG v1 JSON file.

    This is the dataset catalog format the training pipeline bundles; the
    exporter collects every distinct instruction and target text, plus the
    "Default" string used for instruction-free inference.
    """
    raw = json.loads(path.read_text(encoding="utf-8"))
    seen: dict[str, None] = {"Default": None}
    for item in raw["datasets"]:
        seen.setdefault(item["instructions"]["task"], None)
        seen.setdefault(item["instructions"]["task_and_targets"], None)
        for target in item["targets"]:
            seen.setdefault(target, None)
    return tuple(seen)
