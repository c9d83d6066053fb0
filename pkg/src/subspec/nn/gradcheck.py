"""Central finite-difference gradient checks."""

from __future__ import annotations

import numpy as np


def relative_error(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.abs(a), np.abs(b))
    return np.where(denom > 0, np.abs(a - b) / np.where(denom > 0, denom, 1.0), 0.0)


def numeric_grad(f, x: np.ndarray, h: float = 1e-5, index=None) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place.

    With ``index`` (an iterable of flat indices) only those coordinates are
    evaluated; the result is then a 1-D array aligned with ``index``.
    """
    flat = x.reshape(-1)
    coords = range(flat.size) if index is None else list(index)
    out = np.zeros(len(coords))
    for n, i in enumerate(coords):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[n] = (fp - fm) / (2 * h)
    return out.reshape(x.shape) if index is None else out
