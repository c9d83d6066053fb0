from __future__ import annotations

import numpy as np

from ..errors import LabelError, ShapeError

LOG_EPS = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Batch-mean cross-entropy against (possibly soft) target distributions.

    Returns ``(probs, loss, dlogits)`` where ``dlogits = (probs - targets) / B``.
    """
    logits = np.atleast_2d(logits)
    targets = np.atleast_2d(np.asarray(targets, dtype=logits.dtype))
    if logits.shape != targets.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {targets.shape}")
    sums = targets.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6) or np.any(targets < 0):
        raise LabelError(f"targets must be probability vectors (row sums {sums})")
    probs = softmax(logits)
    B = logits.shape[0]
    loss = float(-(targets * np.log(probs + LOG_EPS)).sum() / B)
    return probs, loss, (probs - targets) / B
