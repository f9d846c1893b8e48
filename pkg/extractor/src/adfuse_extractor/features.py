"""Penultimate-layer frame features from a pinned image backbone.

The backbone is a ResNet-50 with its classification layer removed; weights
come from a local file whose SHA-256 is checked against the lockfile, so
extraction is reproducible byte for byte.
"""

import hashlib
import pickle
from pathlib import Path

import numpy as np
import torch
from torchvision.models import resnet50

from .errors import ModelLoadError

FEATURE_DIM = 2048
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class FrameFeatureExtractor:
    """Loads the backbone once and maps batches of RGB frames to
    (n, 2048) float32 features."""

    def __init__(self, weights_path: str | Path,
                 expected_sha256: str | None = None):
        weights_path = Path(weights_path)
        if not weights_path.exists():
            raise ModelLoadError(f"weights file not found: {weights_path}")
        self.weights_sha256 = file_sha256(weights_path)
        if expected_sha256 is not None and self.weights_sha256 != expected_sha256:
            raise ModelLoadError(
                f"{weights_path}: sha256 {self.weights_sha256} does not match "
                f"pinned {expected_sha256}")
        torch.set_num_threads(1)  # fixed reduction order -> byte-stable output
        model = resnet50(weights=None)
        try:
            state = torch.load(weights_path, map_location="cpu",
                               weights_only=True)
            model.load_state_dict(state)
        except (RuntimeError, ValueError, KeyError,
                pickle.UnpicklingError) as exc:
            raise ModelLoadError(f"{weights_path}: {exc}") from exc
        model.fc = torch.nn.Identity()
        model.eval()
        self.model = model

    def extract(self, frames: list[np.ndarray]) -> np.ndarray:
        """frames: list of (224, 224, 3) RGB uint8 -> (n, 2048) float32."""
        if not frames:
            raise ModelLoadError("no frames to extract")
        batch = np.stack(frames).astype(np.float32) / 255.0
        batch = (batch - IMAGENET_MEAN) / IMAGENET_STD
        tensor = torch.from_numpy(batch.transpose(0, 3, 1, 2))
        with torch.no_grad():
            feats = self.model(tensor).numpy().astype(np.float32)
        if feats.shape != (len(frames), FEATURE_DIM):
            raise ModelLoadError(
                f"backbone produced shape {feats.shape}, expected "
                f"({len(frames)}, {FEATURE_DIM})")
        if not np.all(np.isfinite(feats)):
            raise ModelLoadError("backbone produced non-finite features")
        return feats
