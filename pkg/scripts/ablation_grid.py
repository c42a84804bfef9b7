#!/usr/bin/env python3
"""Masking-ablation sweep: train with each combination of the three masking
switches (frequency, random, causal) over several seeds and print a table of
held-out balanced accuracies.

Usage: python scripts/ablation_grid.py [--seeds 0 1 2] [--subjects 5]
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from pathlib import Path

import torch

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from eegalign.config import ClassConfig, DataConfig  # noqa: E402
from eegalign.data import generate_synthetic, split_corpus  # noqa: E402
from eegalign.encoder import EncoderConfig  # noqa: E402
from eegalign.eval import evaluate_instruction_levels  # noqa: E402
from eegalign.instruct import CatalogEntry, InstructConfig, InstructionLevel  # noqa: E402
from eegalign.signal import SignalConfig  # noqa: E402
from eegalign.textembed import TextEmbedder  # noqa: E402
from eegalign.tokenizer import TokenizerConfig  # noqa: E402
from eegalign.train import TrainConfig, make_tune_dataset, run_pretrain, run_tune  # noqa: E402

GRID = {
    "freq+random+causal": {},
    "random+causal": {"use_frequency_mask": False},
    "freq+causal": {"use_random_mask": False},
    "freq+random": {"use_causal_mask": False},
}


def one_run(seed: int, switches: dict, subjects: int) -> float:
    data_cfg = DataConfig(
        classes=[
            ClassConfig("theta", 6.0, "Fz"),
            ClassConfig("alpha", 10.0, "Oz"),
            ClassConfig("sigma", 14.0, "C3"),
            ClassConfig("beta", 20.0, "C4"),
        ],
        subjects=subjects, trials_per_subject_per_class=4,
        duration_s=1.0, noise_sigma=0.4, seed=seed, test_subjects=1,
    )
    corpus = generate_synthetic(data_cfg.synth_spec())
    parts = split_corpus(corpus, data_cfg.split_plan())
    enc = EncoderConfig(layers=2, d=32, heads=4, dropout=0.0, max_tokens=64)
    tok = TokenizerConfig(d=32)
    sg = SignalConfig()
    pre_cfg = TrainConfig(epochs=5, batch_size=16, seed=seed, **switches)
    pre = run_pretrain(parts.train, encoder_cfg=enc, tokenizer_cfg=tok,
                       train_cfg=pre_cfg, signal_cfg=sg)
    ins = InstructConfig(n_queries=4, qformer_layers=2, text_dim=64, dropout=0.0)
    embedder = TextEmbedder(fallback_seed=seed, dim=ins.text_dim)
    names = [c.name for c in data_cfg.classes]
    entry = CatalogEntry(
        name=data_cfg.name,
        task_instruction="Decode synthetic oscillations",
        task_and_targets_instruction=f"Decode synthetic oscillations ({' vs '.join(names)})",
        targets=tuple(names),
    )
    train_ds = make_tune_dataset(data_cfg.name, parts.train, entry, embedder)
    test_ds = make_tune_dataset(data_cfg.name, parts.test, entry, embedder)
    tuned = run_tune(
        [train_ds], pre.model, embedder, instruct_cfg=ins,
        train_cfg=TrainConfig(epochs=20, batch_size=16, seed=seed, stage="tune"),
        signal_cfg=sg,
    )
    report = evaluate_instruction_levels(
        tuned.model, test_ds, embedder, levels=[InstructionLevel.TASK], signal_cfg=sg
    )[0]
    return report.balanced_accuracy


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--subjects", type=int, default=5)
    args = parser.parse_args()
    torch.set_num_threads(1)

    print(f"{'configuration':<22} {'per-seed b-acc':<28} median")
    for name, switches in GRID.items():
        t0 = time.time()
        scores = [one_run(seed, switches, args.subjects) for seed in args.seeds]
        med = statistics.median(scores)
        listed = " ".join(f"{s:.3f}" for s in scores)
        print(f"{name:<22} {listed:<28} {med:.3f}   ({time.time() - t0:.0f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
