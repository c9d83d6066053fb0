"""Mixup over log-mel features and soft labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 0.2
    enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        if not self.alpha > 0:
            raise ConfigError(f"mixup alpha must be > 0, got {self.alpha}")


def sample_lambda(cfg: MixupConfig, rng: np.random.Generator) -> float:
    """One draw from Beta(alpha, alpha)."""
    return float(rng.beta(cfg.alpha, cfg.alpha))


def mixup_batch(features_a, labels_a, features_b, labels_b, lam):
    """lam * a + (1 - lam) * b for features and labels.

    ``lam`` is a scalar or one value per sample (leading axis).
    """
    features_a, features_b = np.asarray(features_a), np.asarray(features_b)
    labels_a, labels_b = np.asarray(labels_a), np.asarray(labels_b)
    if features_a.shape != features_b.shape:
        raise ShapeError(f"feature shapes differ: {features_a.shape} vs {features_b.shape}")
    if labels_a.shape != labels_b.shape:
        raise ShapeError(f"label shapes differ: {labels_a.shape} vs {labels_b.shape}")
    lam = np.asarray(lam, dtype=np.float64)
    if np.any((lam < 0) | (lam > 1)):
        raise ValueError("mixup lambda must lie in [0, 1]")
    lf = lam.reshape(lam.shape + (1,) * (features_a.ndim - lam.ndim))
    ll = lam.reshape(lam.shape + (1,) * (labels_a.ndim - lam.ndim))
    mixed_x = (lf * features_a + (1 - lf) * features_b).astype(features_a.dtype, copy=False)
    mixed_y = ll * labels_a + (1 - ll) * labels_b
    return mixed_x, mixed_y


def pair_partners(batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Partner of element i is element (i + offset) mod B of the (already shuffled) batch."""
    if batch_size < 2:
        return np.zeros(batch_size, dtype=np.int64)
    offset = int(rng.integers(1, batch_size))
    return (np.arange(batch_size) + offset) % batch_size
