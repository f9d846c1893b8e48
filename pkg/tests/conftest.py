"""Shared helpers for building small models and batches."""

import numpy as np
import pytest

from adfuse import model as M


def small_config(**overrides):
    base = dict(qual_onehot_dim=10, quant_dim=4, n_frames=5, frame_embed_dim=12,
                text_embed_dim=8, qual_feat_dim=6, quant_feat_dim=10,
                modal_dim=16, head_hidden_dim=16)
    base.update(overrides)
    return M.ModelConfig(**base)


def init_live_params(config, rng):
    """Params with a randomized output layer. The real init starts the
    output layer at zero, which kills upstream gradients at step 0; tests
    probing gradient flow or output variation need a live head."""
    params = M.init_params(config, rng)
    limit = (6.0 / (config.head_hidden_dim + 1)) ** 0.5
    params.head_out.weight = rng.uniform(
        -limit, limit, size=params.head_out.weight.shape)
    return params


def random_batch(config, size, rng):
    return M.BatchInputs(
        frames=rng.standard_normal((size, config.n_frames, config.frame_embed_dim))
        if config.use_visual else None,
        qual=(rng.random((size, config.qual_onehot_dim)) < 0.3).astype(float)
        if config.use_meta else None,
        quant=rng.standard_normal((size, config.quant_dim))
        if config.use_meta else None,
        text_sum=rng.standard_normal((size, config.text_embed_dim))
        if config.use_text else None)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
