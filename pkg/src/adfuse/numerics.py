"""From-scratch differentiable kernels and the momentum optimizer.

Everything works on plain float64 numpy arrays. Each kernel is a pure
function over explicit state: forward passes return whatever cache the
matching backward pass needs, and nothing keeps hidden references to its
inputs. Gradients are exact (verified against central finite differences
in the test suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBatchError, NonFiniteError, ShapeError

TRAIN = "train"
INFER = "infer"

# Guard used when normalizing a (near-)zero vector.
L2_EPSILON = 1e-12


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite 2-D float64 array."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return x


def glorot_uniform(in_dim: int, out_dim: int, rng: np.random.Generator) -> np.ndarray:
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(in_dim, out_dim))


# ---------------------------------------------------------------------------
# Dense layer
# ---------------------------------------------------------------------------


@dataclass
class Dense:
    """Affine map y = x @ weight + bias, weight shaped (in_dim, out_dim)."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def initialize(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "Dense":
        return cls(weight=glorot_uniform(in_dim, out_dim, rng),
                   bias=np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (output, cache); cache is the input, needed by backward."""
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"dense expects (*, {self.in_dim}) input, got {x.shape}")
        return x @ self.weight + self.bias, x

    def backward(self, cache: np.ndarray, grad_out: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (grad_x, grad_weight, grad_bias)."""
        x = cache
        if grad_out.shape != (x.shape[0], self.out_dim):
            raise ShapeError(
                f"grad_out shape {grad_out.shape} does not match forward "
                f"output ({x.shape[0]}, {self.out_dim})")
        grad_w = x.T @ grad_out
        grad_b = grad_out.sum(axis=0)
        grad_x = grad_out @ self.weight.T
        return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------


@dataclass
class BatchNorm:
    """Per-column batch normalization with learnable affine and running stats."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum_stat: float = 0.1

    @classmethod
    def initialize(cls, dim: int) -> "BatchNorm":
        return cls(gamma=np.ones(dim), beta=np.zeros(dim),
                   running_mean=np.zeros(dim), running_var=np.ones(dim))

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    def forward(self, x: np.ndarray, mode: str) -> tuple[np.ndarray, tuple | None]:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeError(f"batchnorm expects (*, {self.dim}) input, got {x.shape}")
        if mode == INFER:
            x_hat = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
            return self.gamma * x_hat + self.beta, None
        n = x.shape[0]
        if n < 2:
            raise DegenerateBatchError(
                f"train-mode batchnorm needs at least 2 rows, got {n}")
        mean = x.mean(axis=0)
        centered = x - mean
        var = (centered ** 2).mean(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = centered * inv_std
        # Running stats track the unbiased variance.
        self.running_mean = (1.0 - self.momentum_stat) * self.running_mean \
            + self.momentum_stat * mean
        self.running_var = (1.0 - self.momentum_stat) * self.running_var \
            + self.momentum_stat * var * n / (n - 1)
        return self.gamma * x_hat + self.beta, (x_hat, inv_std)

    def backward(self, cache: tuple | None, grad_out: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact gradient of the train-mode forward, including the dependence
        of the batch mean/variance on x."""
        if cache is None:
            raise ShapeError("batchnorm backward needs a train-mode cache")
        x_hat, inv_std = cache
        if grad_out.shape != x_hat.shape:
            raise ShapeError(
                f"grad_out shape {grad_out.shape} does not match cache {x_hat.shape}")
        grad_gamma = (grad_out * x_hat).sum(axis=0)
        grad_beta = grad_out.sum(axis=0)
        d_hat = grad_out * self.gamma
        grad_x = (d_hat - d_hat.mean(axis=0)
                  - x_hat * (d_hat * x_hat).mean(axis=0)) * inv_std
        return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------


def dropout_forward(p: float, x: np.ndarray, mode: str,
                    rng: np.random.Generator | None = None
                    ) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: survivors are scaled by 1/(1-p), inference is identity."""
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout probability must be in [0, 1), got {p}")
    if mode == INFER or p == 0.0:
        return x, None
    if rng is None:
        raise ShapeError("train-mode dropout needs an rng")
    mask = rng.random(x.shape) >= p
    return x * mask / (1.0 - p), mask


def dropout_backward(p: float, mask: np.ndarray | None,
                     grad_out: np.ndarray) -> np.ndarray:
    if mask is None:
        return grad_out
    return grad_out * mask / (1.0 - p)


# ---------------------------------------------------------------------------
# Softmax attention pooling
# ---------------------------------------------------------------------------


@dataclass
class AttentionScorer:
    """Scores each item row with a shared linear map; softmax turns scores
    into pooling weights."""

    weight: np.ndarray          # (dim,)
    bias: np.ndarray            # (1,)

    @classmethod
    def initialize(cls, dim: int) -> "AttentionScorer":
        # Zero init: attention starts exactly uniform.
        return cls(weight=np.zeros(dim), bias=np.zeros(1))

    @property
    def dim(self) -> int:
        return self.weight.shape[0]


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def attention_pool(scorer: AttentionScorer, items: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Pool item rows into one vector: weights = softmax(items @ w + b),
    pooled = sum_i weights_i * items_i. Returns (pooled, weights, cache)."""
    if items.ndim != 2 or items.shape[0] == 0:
        raise ShapeError(f"attention_pool needs a non-empty 2-D input, got {items.shape}")
    if items.shape[1] != scorer.dim:
        raise ShapeError(
            f"attention_pool expects items with {scorer.dim} columns, got {items.shape}")
    pooled, weights, cache = attention_pool_batch(scorer, items[None, :, :])
    return pooled[0], weights[0], cache


def attention_pool_batch(scorer: AttentionScorer, items: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Batched pooling over items shaped (batch, m, dim)."""
    if items.ndim != 3 or items.shape[1] == 0:
        raise ShapeError(f"expected (batch, m, dim) items, got {items.shape}")
    scores = items @ scorer.weight + scorer.bias[0]          # (B, m)
    weights = softmax(scores, axis=1)
    pooled = np.einsum("bm,bmd->bd", weights, items)
    return pooled, weights, (items, weights)


def attention_pool_backward(scorer: AttentionScorer, cache: tuple,
                            grad_pooled: np.ndarray,
                            grad_weights: np.ndarray | None = None
                            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_items, grad_weight, grad_bias) for the batched pooling."""
    items, weights = cache
    g_w = np.einsum("bd,bmd->bm", grad_pooled, items)
    if grad_weights is not None:
        g_w = g_w + grad_weights
    # softmax backward per row
    g_scores = weights * (g_w - (weights * g_w).sum(axis=1, keepdims=True))
    grad_items = weights[:, :, None] * grad_pooled[:, None, :] \
        + g_scores[:, :, None] * scorer.weight[None, None, :]
    grad_weight = np.einsum("bm,bmd->d", g_scores, items)
    grad_bias = np.array([g_scores.sum()])
    return grad_items, grad_weight, grad_bias


# ---------------------------------------------------------------------------
# L2 normalization
# ---------------------------------------------------------------------------


def l2_normalize(v: np.ndarray, epsilon_norm: float = L2_EPSILON) -> np.ndarray:
    """v / max(||v||, epsilon). The guard makes the zero vector map to itself."""
    norm = np.linalg.norm(v)
    return v / max(norm, epsilon_norm)


def l2_normalize_rows(v: np.ndarray, epsilon_norm: float = L2_EPSILON
                      ) -> tuple[np.ndarray, tuple]:
    """Row-wise normalization for (batch, dim) input; returns (out, cache)."""
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    denom = np.maximum(norms, epsilon_norm)
    out = v / denom
    return out, (out, norms, denom)


def l2_normalize_rows_backward(cache: tuple, grad_out: np.ndarray,
                               epsilon_norm: float = L2_EPSILON) -> np.ndarray:
    out, norms, denom = cache
    guarded = norms < epsilon_norm
    dot = (out * grad_out).sum(axis=1, keepdims=True)
    grad = (grad_out - out * dot) / denom
    if np.any(guarded):
        # Below the guard the map is v / epsilon, a constant scale.
        grad = np.where(guarded, grad_out / epsilon_norm, grad)
    return grad


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.size == 0:
        raise ShapeError(
            f"mse_loss needs equal non-empty shapes, got {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.size == 0:
        raise ShapeError(
            f"mse_grad needs equal non-empty shapes, got {pred.shape} vs {target.shape}")
    return 2.0 * (pred - target) / pred.size


# ---------------------------------------------------------------------------
# Momentum SGD
# ---------------------------------------------------------------------------


@dataclass
class SgdMomentum:
    """Classical momentum: v <- momentum*v + grad; p <- p - lr*v."""

    learning_rate: float
    momentum: float
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ShapeError("learning rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ShapeError("momentum must be in [0, 1)")

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update parameter tensors in place."""
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(
                    f"gradient for {name} has shape {g.shape}, expected {p.shape}")
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v + g
            self.velocity[name] = v
            p -= self.learning_rate * v


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_tensor: str
    n_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(f, params: dict[str, np.ndarray], tolerance: float,
               step: float = 1e-4, rng: np.random.Generator | None = None,
               max_entries_per_tensor: int | None = None,
               zero_floor: float = 1e-6) -> GradCheckReport:
    """Central-difference check of a scalar map.

    ``f(params) -> (loss, grads)`` must be deterministic given the parameter
    values (frozen dropout masks, fixed batch). Each coordinate is perturbed
    in place by +/- step; when ``max_entries_per_tensor`` is set, a
    deterministic random subset of coordinates per tensor is checked instead
    of every entry (needed to keep full-model checks tractable).

    The relative-error denominator is floored at ``zero_floor``: where the
    true derivative is zero (a bias feeding a batch norm, say) the central
    difference returns pure floating-point noise (~1e-11 for O(1) losses),
    and comparing that noise against an analytic 1e-17 must count as a
    match, not a failure.
    """
    loss0, grads = f(params)
    if not math.isfinite(loss0):
        raise NonFiniteError("grad_check: forward produced a non-finite loss")
    max_rel = 0.0
    worst = ""
    n_checked = 0
    for name, p in params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries_per_tensor is not None and flat.size > max_entries_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            idx = rng.choice(flat.size, size=max_entries_per_tensor, replace=False)
        g_flat = grads[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            loss_plus, _ = f(params)
            flat[i] = orig - step
            loss_minus, _ = f(params)
            flat[i] = orig
            if not (math.isfinite(loss_plus) and math.isfinite(loss_minus)):
                raise NonFiniteError(
                    f"grad_check: non-finite loss while perturbing {name}[{i}]")
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            analytic = g_flat[i]
            denom = max(abs(numeric), abs(analytic), zero_floor)
            rel = abs(numeric - analytic) / denom
            n_checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = f"{name}[{i}]"
    return GradCheckReport(max_rel_error=max_rel, worst_tensor=worst,
                           n_checked=n_checked, tolerance=tolerance)
