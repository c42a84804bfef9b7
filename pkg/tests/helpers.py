"""Shared builders for training/CLI/acceptance tests (not a test module)."""

import torch

from eegalign.config import ClassConfig, DataConfig
from eegalign.encoder import DualEncoder, EncoderConfig
from eegalign.instruct import InstructConfig, InstructionHead
from eegalign.tokenizer import TokenizerConfig
from eegalign.train import FullModel


def small_data_config(subjects=3, trials=4, noise=0.3, seed=0, duration=1.0, name="synthetic"):
    return DataConfig(
        name=name,
        classes=[ClassConfig("alpha", 10.0, "Oz"), ClassConfig("beta", 20.0, "C3")],
        subjects=subjects,
        trials_per_subject_per_class=trials,
        duration_s=duration,
        noise_sigma=noise,
        seed=seed,
    )


def tiny_setup(d=16, text_dim=32):
    torch.manual_seed(0)
    encoder = DualEncoder(
        EncoderConfig(layers=1, d=d, heads=2, dropout=0.0, max_tokens=64),
        TokenizerConfig(d=d),
    )
    head = InstructionHead(
        d, InstructConfig(n_queries=2, qformer_layers=1, text_dim=text_dim, dropout=0.0)
    )
    model = FullModel(encoder=encoder, head=head)
    model.eval()
    return model, encoder, head
