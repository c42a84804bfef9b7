import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def montage():
    from eegalign.montage import default_montage

    return default_montage()


def make_trial(data, rate=200.0, trial_id="t0", subject="S01", label=None, names=None):
    from eegalign.signal import RawTrial

    data = np.asarray(data)
    if names is None:
        names = tuple(f"ch{i}" for i in range(data.shape[0]))
    return RawTrial(
        channel_names=names,
        sample_rate=rate,
        data=data,
        subject_id=subject,
        trial_id=trial_id,
        label=label,
    )


def make_segment(data, trial_id="t0", index=0):
    from eegalign.signal import Segment

    return Segment(data=np.asarray(data), trial_id=trial_id, index=index)


def tiny_encoder(d=16, layers=2, heads=2, max_tokens=32, window=100, dropout=0.0, dtype=None):
    """Small dual encoder for oracle tests; float64 when dtype given."""
    from eegalign.encoder import DualEncoder, EncoderConfig
    from eegalign.tokenizer import TokenizerConfig

    torch.manual_seed(0)
    model = DualEncoder(
        EncoderConfig(layers=layers, d=d, heads=heads, dropout=dropout, max_tokens=max_tokens),
        TokenizerConfig(d=d, window_samples=window),
    )
    if dtype is not None:
        model = model.to(dtype)
    model.eval()
    return model
