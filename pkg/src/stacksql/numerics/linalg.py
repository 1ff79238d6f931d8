"""Dense helpers: checked matmul, stable softmax/sigmoid, losses, init, dropout.

Matrices are 2-D float64 numpy arrays throughout; shape violations raise
ShapeError before any arithmetic runs.
"""

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A computation produced or consumed a non-finite value."""


def matmul(a, b):
    """Checked matrix product of two 2-D arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(m):
    """Row-wise softmax with max subtraction for stability."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2 or m.size == 0:
        raise ShapeError(f"softmax_rows expects a nonempty 2-D matrix, got shape {m.shape}")
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x):
    """Numerically stable elementwise logistic."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_ce(scores, target):
    """Cross-entropy of softmax(scores) against a target index.

    Returns (loss, dscores); dscores is the gradient wrt the raw scores.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ShapeError(f"softmax_ce expects a score vector, got shape {scores.shape}")
    if not 0 <= target < scores.shape[0]:
        raise ShapeError(f"target {target} outside {scores.shape[0]} classes")
    shifted = scores - scores.max()
    logz = np.log(np.exp(shifted).sum())
    p = np.exp(shifted - logz)
    loss = logz - shifted[target]
    dscores = p.copy()
    dscores[target] -= 1.0
    return float(loss), dscores


def sigmoid_bce(scores, labels):
    """Summed binary cross-entropy of sigmoid(scores) against 0/1 labels.

    Uses the log1p(exp(-|s|)) form so large scores cannot overflow.
    Returns (loss, dscores).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} differ")
    loss = np.maximum(scores, 0.0) - scores * labels + np.log1p(np.exp(-np.abs(scores)))
    dscores = sigmoid(scores) - labels
    return float(loss.sum()), dscores


def uniform_init(rng, shape, fan_in):
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    bound = 1.0 / np.sqrt(max(int(fan_in), 1))
    return rng.uniform(-bound, bound, size=shape)


def dropout_mask(rng, shape, rate):
    """Inverted-dropout mask: zeros with probability `rate`, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


def require_finite(arr, what="array"):
    """Raise NumericError when arr contains NaN or Inf."""
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {what}")
    return arr
