"""Frame sampling: n equally spaced frames per video.

Timestamps are midpoints, (k + 0.5) * duration / n for k = 0..n-1, so the
first and last samples sit away from container edges where decoders are
flaky. Frames are returned as 224x224 RGB uint8 arrays.
"""

from pathlib import Path

import cv2
import numpy as np

from .errors import VideoDecodeError

FRAME_SIZE = 224


def probe_duration(video_path: str | Path) -> float:
    """Video duration in seconds from container metadata."""
    cap = cv2.VideoCapture(str(video_path))
    try:
        if not cap.isOpened():
            raise VideoDecodeError(f"cannot open video: {video_path}")
        fps = cap.get(cv2.CAP_PROP_FPS)
        count = cap.get(cv2.CAP_PROP_FRAME_COUNT)
        if fps <= 0 or count <= 0:
            raise VideoDecodeError(
                f"{video_path}: no usable fps/frame-count metadata")
        return count / fps
    finally:
        cap.release()


def sample_timestamps(duration: float, n: int) -> list[float]:
    if n < 1:
        raise VideoDecodeError(f"need n >= 1 frames, got {n}")
    if duration <= 0:
        raise VideoDecodeError(f"non-positive duration {duration}")
    return [(k + 0.5) * duration / n for k in range(n)]


def sample_frames(video_path: str | Path, n: int) -> list[np.ndarray]:
    """Decode n frames at the midpoint timestamps, resized to 224x224 RGB."""
    cap = cv2.VideoCapture(str(video_path))
    try:
        if not cap.isOpened():
            raise VideoDecodeError(f"cannot open video: {video_path}")
        fps = cap.get(cv2.CAP_PROP_FPS)
        count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if fps <= 0 or count <= 0:
            raise VideoDecodeError(
                f"{video_path}: no usable fps/frame-count metadata")
        duration = count / fps
        frames = []
        for t in sample_timestamps(duration, n):
            index = min(int(t * fps), count - 1)
            cap.set(cv2.CAP_PROP_POS_FRAMES, index)
            ok, frame = cap.read()
            if not ok or frame is None:
                raise VideoDecodeError(
                    f"{video_path}: failed to decode frame {index}")
            frame = cv2.resize(frame, (FRAME_SIZE, FRAME_SIZE),
                               interpolation=cv2.INTER_AREA)
            frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
        return frames
    finally:
        cap.release()
