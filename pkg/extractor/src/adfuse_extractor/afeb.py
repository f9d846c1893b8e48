"""Writer for the model's binary embedding format.

Layout: magic "AFEB" | u32 version=1 | u32 rows | u32 cols | rows*cols
float32 little-endian row-major. This mirrors the consumer side's reader;
the file format is the interface between the two packages.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AFEB"
VERSION = 1


def write_embedding(path: str | Path, matrix: np.ndarray) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError(f"embedding must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("embedding contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, m.shape[0], m.shape[1]))
        fh.write(m.tobytes())
