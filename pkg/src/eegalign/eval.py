"""Classification metrics, instruction-sensitivity evaluation, embedding dumps.

Balanced accuracy is the mean per-class recall (classes absent from the
ground truth are excluded); Cohen's kappa is chance-corrected agreement with
expected agreement from the marginal products. Both are derived from an
explicit confusion matrix so reports stay recomputable.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .instruct import InstructionLevel, Prediction, predict
from .signal import SignalConfig
from .textembed import TextEmbedder
from .train import FullModel, TuneDataset, trial_segments


def confusion_matrix(
    y_true: Sequence[str], y_pred: Sequence[str], classes: Sequence[str]
) -> np.ndarray:
    """Counts matrix with rows = true class, columns = predicted class."""
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred must have equal length")
    if len(y_true) == 0:
        raise ValueError("cannot evaluate empty label lists")
    index = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if t not in index or p not in index:
            raise ValueError(f"label pair ({t!r}, {p!r}) outside class set {list(classes)}")
        cm[index[t], index[p]] += 1
    return cm


def balanced_accuracy_from_confusion(cm: np.ndarray) -> float:
    support = cm.sum(axis=1)
    present = support > 0
    recalls = cm.diagonal()[present] / support[present]
    return float(recalls.mean())


def kappa_from_confusion(cm: np.ndarray) -> tuple[float, bool]:
    """(kappa, degenerate flag); degenerate chance agreement maps to 0."""
    n = cm.sum()
    p_o = cm.diagonal().sum() / n
    p_e = float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / (n * n)
    if p_e >= 1.0 - 1e-15:
        return 0.0, True
    return float((p_o - p_e) / (1.0 - p_e)), False


def balanced_accuracy(
    y_true: Sequence[str], y_pred: Sequence[str], classes: Sequence[str]
) -> float:
    """Mean recall over classes that appear in the ground truth."""
    return balanced_accuracy_from_confusion(confusion_matrix(y_true, y_pred, classes))


def cohens_kappa(
    y_true: Sequence[str], y_pred: Sequence[str], classes: Sequence[str]
) -> float:
    """Chance-corrected agreement; degenerate single-class case returns 0."""
    value, degenerate = kappa_from_confusion(confusion_matrix(y_true, y_pred, classes))
    if degenerate:
        warnings.warn("degenerate kappa: chance agreement is 1; reporting 0", stacklevel=2)
    return value


@dataclass
class EvalReport:
    dataset: str
    level: InstructionLevel
    balanced_accuracy: float
    kappa: float
    kappa_degenerate: bool
    per_class_recall: dict[str, float]
    confusion: np.ndarray
    classes: tuple[str, ...]
    n_samples: int

    @classmethod
    def from_labels(
        cls,
        dataset: str,
        level: InstructionLevel,
        y_true: Sequence[str],
        y_pred: Sequence[str],
        classes: Sequence[str],
    ) -> "EvalReport":
        cm = confusion_matrix(y_true, y_pred, classes)
        support = cm.sum(axis=1)
        recalls = {
            c: float(cm[i, i] / support[i])
            for i, c in enumerate(classes)
            if support[i] > 0
        }
        kappa, degenerate = kappa_from_confusion(cm)
        return cls(
            dataset=dataset,
            level=level,
            balanced_accuracy=balanced_accuracy_from_confusion(cm),
            kappa=kappa,
            kappa_degenerate=degenerate,
            per_class_recall=recalls,
            confusion=cm,
            classes=tuple(classes),
            n_samples=len(y_true),
        )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "level": self.level.value,
            "balanced_accuracy": self.balanced_accuracy,
            "kappa": self.kappa,
            "kappa_degenerate": self.kappa_degenerate,
            "per_class_recall": self.per_class_recall,
            "confusion": self.confusion.tolist(),
            "classes": list(self.classes),
            "n_samples": self.n_samples,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def predict_dataset(
    model: FullModel,
    dataset: TuneDataset,
    instruction_vector: torch.Tensor,
    signal_cfg: SignalConfig | None = None,
    batch_size: int = 64,
) -> list[Prediction]:
    """Classify each trial under one fixed instruction embedding."""
    signal_cfg = signal_cfg or SignalConfig()
    model.eval()
    stacks = [trial_segments(t, signal_cfg.window_samples) for t in dataset.trials]
    predictions: list[Prediction] = []
    with torch.no_grad():
        groups: dict[int, list[int]] = {}
        for i, s in enumerate(stacks):
            groups.setdefault(s.shape[0], []).append(i)
        results: dict[int, Prediction] = {}
        for _, members in sorted(groups.items()):
            for start in range(0, len(members), batch_size):
                chunk = members[start : start + batch_size]
                seg_in = torch.from_numpy(np.stack([stacks[i] for i in chunk]))
                e = instruction_vector[None].expand(len(chunk), -1)
                h = model(seg_in, e)
                for row, i in enumerate(chunk):
                    results[i] = predict(h[row], dataset.bank)
        predictions = [results[i] for i in range(len(stacks))]
    return predictions


def embeddings_for_dataset(
    model: FullModel,
    dataset: TuneDataset,
    instruction_vector: torch.Tensor,
    signal_cfg: SignalConfig | None = None,
    batch_size: int = 64,
) -> np.ndarray:
    """Per-trial output embeddings (n_trials, k) under one instruction."""
    signal_cfg = signal_cfg or SignalConfig()
    model.eval()
    stacks = [trial_segments(t, signal_cfg.window_samples) for t in dataset.trials]
    out = np.zeros((len(stacks), instruction_vector.shape[-1]), dtype=np.float32)
    with torch.no_grad():
        groups: dict[int, list[int]] = {}
        for i, s in enumerate(stacks):
            groups.setdefault(s.shape[0], []).append(i)
        for _, members in sorted(groups.items()):
            for start in range(0, len(members), batch_size):
                chunk = members[start : start + batch_size]
                seg_in = torch.from_numpy(np.stack([stacks[i] for i in chunk]))
                e = instruction_vector[None].expand(len(chunk), -1)
                h = model(seg_in, e)
                for row, i in enumerate(chunk):
                    out[i] = h[row].numpy().astype(np.float32)
    return out


def evaluate_instruction_levels(
    model: FullModel,
    dataset: TuneDataset,
    embedder: TextEmbedder,
    levels: Sequence[InstructionLevel] = tuple(InstructionLevel),
    signal_cfg: SignalConfig | None = None,
) -> list[EvalReport]:
    """One report per instruction level; prototypes are identical across levels."""
    reports = []
    y_true = [t.label for t in dataset.trials]
    for level in levels:
        text = dataset.entry.instruction(level)
        vec = torch.from_numpy(embedder(text).vector).to(torch.float32)
        preds = predict_dataset(model, dataset, vec, signal_cfg)
        y_pred = [p.class_name for p in preds]
        reports.append(
            EvalReport.from_labels(dataset.tag, level, y_true, y_pred, dataset.bank.classes)
        )
    return reports


def dump_embeddings(
    model: FullModel,
    dataset: TuneDataset,
    embedder: TextEmbedder,
    path: str | Path,
    level: InstructionLevel = InstructionLevel.TASK,
    signal_cfg: SignalConfig | None = None,
) -> Path:
    """Write per-trial embeddings plus the prototype rows as CSV.

    Header is ``id,label,level,e0..e{k-1}``; floats are printed with 9
    significant digits (full float32 precision).
    """
    path = Path(path)
    text = dataset.entry.instruction(level)
    vec = torch.from_numpy(embedder(text).vector).to(torch.float32)
    embs = embeddings_for_dataset(model, dataset, vec, signal_cfg)
    k = embs.shape[1]
    lines = ["id,label,level," + ",".join(f"e{i}" for i in range(k))]
    for trial, row in zip(dataset.trials, embs):
        values = ",".join(f"{float(v):.9g}" for v in row)
        lines.append(f"{trial.trial_id},{trial.label},{level.value},{values}")
    for name, proto in zip(dataset.bank.classes, dataset.bank.vectors):
        values = ",".join(f"{float(v):.9g}" for v in proto.to(torch.float32))
        lines.append(f"prototype:{name},{name},prototype,{values}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
