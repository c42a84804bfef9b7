"""EEG-language alignment pipeline.

Spectral-temporal reconstruction pretraining of a dual-branch EEG encoder,
followed by instruction-conditioned query tuning that aligns EEG embeddings
with text prototype vectors. Includes synthetic-data tooling, training,
inference, and evaluation.
"""

__version__ = "0.1.0"
