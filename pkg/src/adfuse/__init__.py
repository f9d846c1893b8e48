"""Multimodal CTR regression for online video ads.

Predicts the log-scale click-through rate of an ad from precomputed frame
embeddings, metadata, and text embeddings: attention pooling over frames,
separated metadata encoding, a summed-text branch, L2-normalized modality
attention fusion, and a small regression head, all trained with manual
backpropagation and momentum SGD.
"""

__version__ = "0.1.0"
