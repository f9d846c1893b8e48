"""Embedding extraction for the adfuse CTR model.

Samples equally spaced frames from ad videos, extracts 2048-d penultimate
features with a pinned image-classification backbone, embeds the five ad
text fields into 300-d vectors with a pinned word-vector table, and writes
the binary embedding files plus a manifest the model's data loader accepts.
"""

__version__ = "0.1.0"
