"""Training losses: softmax cross-entropy, sigmoid BCE, L1, equalization loss.

All losses take raw logits, return a scalar Tensor, and are numerically
stable (log-sum-exp / softplus forms). The equalization loss is the
sigmoid-BCE variant for long-tailed classification: negative-sample terms
are dropped for classes whose frequency is below the rarity threshold,
except for the ground-truth class. With threshold 0 it reduces exactly to
binary cross-entropy against the one-hot target.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation
from .tensor import Tensor, _make


def _check_logits(logits: Tensor) -> None:
    if not np.all(np.isfinite(logits.data)):
        raise ContractViolation("logits must be finite")


def _as_2d(logits: Tensor) -> tuple[np.ndarray, bool]:
    if logits.ndim == 1:
        return logits.data[None, :], True
    if logits.ndim == 2:
        return logits.data, False
    raise ContractViolation(f"expected 1D or 2D logits, got shape {logits.shape}")


def _labels_array(labels, batch: int, classes: int) -> np.ndarray:
    arr = np.asarray(labels, dtype=np.int64).reshape(-1)
    if arr.shape[0] != batch:
        raise ContractViolation(f"expected {batch} labels, got {arr.shape[0]}")
    if arr.min() < 0 or arr.max() >= classes:
        raise ContractViolation(f"label index out of range [0, {classes})")
    return arr


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy; labels are class indices."""
    _check_logits(logits)
    z, _ = _as_2d(logits)
    b, c = z.shape
    y = _labels_array(labels, b, c)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(b), y]))

    def backward(g):
        if logits.requires_grad:
            p = np.exp(z - zmax)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(b), y] -= 1.0
            grad = (g * p / b).reshape(logits.shape)
            logits._accumulate(grad)

    return _make(np.array(loss), (logits,), backward)


def _bce_elementwise(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # max(z,0) - z*y + log(1 + exp(-|z|)); stable softplus form
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean element-wise sigmoid BCE; targets are 0/1 with logits' shape."""
    _check_logits(logits)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ContractViolation(f"target shape {y.shape} does not match logits {logits.shape}")
    n = logits.size
    loss = float(_bce_elementwise(logits.data, y).mean())

    def backward(g):
        if logits.requires_grad:
            logits._accumulate(g * (_sigmoid(logits.data) - y) / n)

    return _make(np.array(loss), (logits,), backward)


def l1(pred: Tensor, target) -> Tensor:
    """Mean absolute error."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ContractViolation(f"target shape {t.shape} does not match prediction {pred.shape}")
    diff = pred.data - t
    loss = float(np.abs(diff).mean())
    sign = np.sign(diff)
    n = pred.size

    def backward(g):
        if pred.requires_grad:
            pred._accumulate(g * sign / n)

    return _make(np.array(loss), (pred,), backward)


def equalization_loss(logits: Tensor, labels, class_freqs, rarity_threshold: float) -> Tensor:
    """Sigmoid BCE with negative gradients suppressed on rare classes.

    class_freqs must sum to 1. A class j with class_freqs[j] below the
    rarity threshold contributes no negative-sample term unless j is the
    ground-truth class. Normalization matches binary_cross_entropy so the
    threshold-0 case is an exact reduction.
    """
    _check_logits(logits)
    z, was_1d = _as_2d(logits)
    b, c = z.shape
    freqs = np.asarray(class_freqs, dtype=np.float64)
    if freqs.shape != (c,):
        raise ContractViolation(f"class_freqs must have shape ({c},)")
    if abs(freqs.sum() - 1.0) > 1e-6:
        raise ContractViolation("class_freqs must sum to 1")
    y_idx = _labels_array(labels, b, c)
    y = np.zeros((b, c))
    y[np.arange(b), y_idx] = 1.0
    rare = (freqs < rarity_threshold).astype(np.float64)  # T_lambda(f_j)
    # w=0 only where the class is rare AND not the ground truth
    w = 1.0 - rare[None, :] * (1.0 - y)
    n = b * c
    loss = float((w * _bce_elementwise(z, y)).sum() / n)

    def backward(g):
        if logits.requires_grad:
            grad = g * w * (_sigmoid(z) - y) / n
            logits._accumulate(grad.reshape(logits.shape))

    return _make(np.array(loss), (logits,), backward)
