"""Local fixtures: a deterministic test clip, seeded backbone weights,
and a small word-vector table."""

import numpy as np
import pytest


def write_clip(path, n_frames=40, fps=8.0, size=64, still=False):
    """MJPG AVI where frame i is a solid color encoding i (so sampled
    timestamps are checkable after decode)."""
    import cv2
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"),
                             fps, (size, size))
    assert writer.isOpened()
    for i in range(n_frames):
        level = 128 if still else (i * 6) % 250
        frame = np.full((size, size, 3), level, np.uint8)
        writer.write(frame)
    writer.release()
    return path


@pytest.fixture(scope="session")
def clip_5s(tmp_path_factory):
    return write_clip(tmp_path_factory.mktemp("clips") / "clip5s.avi",
                      n_frames=40, fps=8.0)


@pytest.fixture(scope="session")
def backbone_weights(tmp_path_factory):
    import torch
    from torchvision.models import resnet50
    torch.manual_seed(0)
    model = resnet50(weights=None)
    path = tmp_path_factory.mktemp("models") / "backbone.pt"
    torch.save(model.state_dict(), path)
    return path


@pytest.fixture(scope="session")
def word_vectors(tmp_path_factory):
    rng = np.random.default_rng(5)
    tokens = ["swift", "bright", "prime", "daily", "smart", "fresh", "app",
              "game", "sale", "now", "50", "off", "ゲーム", "広告", "クリ",
              "リッ", "ック"]
    dim = 300
    path = tmp_path_factory.mktemp("models") / "vectors.vec"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(tokens)} {dim}\n")
        for t in tokens:
            vec = rng.standard_normal(dim)
            fh.write(t + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")
    return path
