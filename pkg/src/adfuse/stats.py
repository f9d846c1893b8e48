"""Association statistics used by evaluation and the metadata analysis."""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError


def pearson(x, y) -> float | None:
    """Product-moment correlation; None when either vector is constant
    (the coefficient is undefined there)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ShapeError(
            f"pearson needs two equal-length vectors of size >= 2, "
            f"got {x.shape} and {y.shape}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return None
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float((xc ** 2).sum()) * float((yc ** 2).sum()))
    if denom == 0.0:
        return None
    r = float((xc * yc).sum()) / denom
    return min(max(r, -1.0), 1.0)


def correlation_ratio(values, labels, squared: bool = False) -> float:
    """Association between a categorical variable and a real outcome:
    sqrt(between-group sum of squares / total sum of squares). Returns 0
    when the outcome has no variance."""
    y = np.asarray(values, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ShapeError("correlation_ratio needs a non-empty value vector")
    labels = list(labels)
    if len(labels) != y.size:
        raise ShapeError(
            f"got {y.size} values but {len(labels)} labels")
    mean = y.mean()
    ss_total = float(((y - mean) ** 2).sum())
    if ss_total == 0.0:
        return 0.0
    ss_between = 0.0
    groups: dict = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    for idx in groups.values():
        g = y[idx]
        ss_between += g.size * float((g.mean() - mean) ** 2)
    ratio = min(max(ss_between / ss_total, 0.0), 1.0)
    return ratio if squared else math.sqrt(ratio)
