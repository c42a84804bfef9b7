#!/usr/bin/env python3
"""Full desk-scale pipeline in one process: synthesize a 4-class corpus,
pretrain, instruction-tune, then score all three instruction levels on the
held-out subjects. Finishes in about a minute single-threaded.

Usage: python scripts/end_to_end_demo.py [--seed N] [--out DIR]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import torch

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from eegalign.config import DataConfig, load_config  # noqa: E402
from eegalign.data import generate_synthetic, split_corpus  # noqa: E402
from eegalign.encoder import EncoderConfig  # noqa: E402
from eegalign.eval import dump_embeddings, evaluate_instruction_levels  # noqa: E402
from eegalign.instruct import CatalogEntry, InstructConfig  # noqa: E402
from eegalign.signal import SignalConfig  # noqa: E402
from eegalign.textembed import TextEmbedder  # noqa: E402
from eegalign.tokenizer import TokenizerConfig  # noqa: E402
from eegalign.train import (  # noqa: E402
    TrainConfig,
    make_tune_dataset,
    run_pretrain,
    run_tune,
    write_history_csv,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="demo_out")
    parser.add_argument("--config", default=str(ROOT / "configs" / "desk.toml"))
    args = parser.parse_args()
    torch.set_num_threads(1)

    cfg = load_config(args.config)
    cfg.train.seed = args.seed
    cfg.data.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    corpus = generate_synthetic(cfg.data.synth_spec())
    parts = split_corpus(corpus, cfg.data.split_plan())
    print(f"corpus: {len(corpus)} trials "
          f"(train {len(parts.train)} / val {len(parts.val)} / test {len(parts.test)})")

    pre = run_pretrain(
        parts.train,
        encoder_cfg=cfg.encoder, tokenizer_cfg=cfg.tokenizer,
        train_cfg=cfg.train, signal_cfg=cfg.signal,
    )
    print(f"pretrain: {pre.steps_taken} steps, "
          f"loss {pre.history[0].loss:.3f} -> {pre.history[-1].loss:.3f} "
          f"({time.time() - t0:.0f}s)")
    write_history_csv(pre.history, out / "pretrain_curve.csv")

    embedder = TextEmbedder(fallback_seed=args.seed, dim=cfg.instruct.text_dim)
    names = [c.name for c in cfg.data.classes]
    entry = CatalogEntry(
        name=cfg.data.name,
        task_instruction="Decode synthetic oscillations",
        task_and_targets_instruction=f"Decode synthetic oscillations ({' vs '.join(names)})",
        targets=tuple(names),
    )
    train_ds = make_tune_dataset(cfg.data.name, parts.train, entry, embedder)
    val_ds = make_tune_dataset(cfg.data.name, parts.val, entry, embedder)
    test_ds = make_tune_dataset(cfg.data.name, parts.test, entry, embedder)

    tune_cfg = TrainConfig(
        epochs=20, batch_size=cfg.train.batch_size, seed=args.seed, stage="tune",
        peak_lr=cfg.train.peak_lr, min_lr=cfg.train.min_lr,
    )
    tuned = run_tune(
        [train_ds], pre.model, embedder,
        instruct_cfg=cfg.instruct, train_cfg=tune_cfg, signal_cfg=cfg.signal,
        val_datasets=[val_ds],
    )
    train_losses = [h.loss for h in tuned.history if h.split == "train"]
    print(f"tune: {tuned.steps_taken} steps, "
          f"loss {train_losses[0]:.4f} -> {train_losses[-1]:.4f} "
          f"({time.time() - t0:.0f}s)")
    write_history_csv(tuned.history, out / "tune_curve.csv")

    for report in evaluate_instruction_levels(tuned.model, test_ds, embedder, signal_cfg=cfg.signal):
        print(f"  level={report.level.value:<17} "
              f"b_acc={report.balanced_accuracy:.3f} kappa={report.kappa:.3f} "
              f"n={report.n_samples}")
    dump_embeddings(tuned.model, test_ds, embedder, out / "test_embeddings.csv",
                    signal_cfg=cfg.signal)
    print(f"artifacts in {out}/ ({time.time() - t0:.0f}s total)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
