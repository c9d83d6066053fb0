"""Weighted score-level fusion and an exhaustive simplex grid search over the weights."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import MetricError, SearchError, ShapeError


@dataclass(frozen=True)
class FusionWeights:
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(self.weights))
        object.__setattr__(self, "weights", w)
        if not w or any(v < 0 for v in w) or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"fusion weights must be non-negative and sum to 1, got {w}")

    @classmethod
    def uniform(cls, n: int) -> "FusionWeights":
        return cls((1.0 / n,) * n)

    def __len__(self):
        return len(self.weights)

    def label(self) -> str:
        return ",".join(f"{v:g}" for v in self.weights)


@dataclass
class FusionSearchResult:
    best_weights: FusionWeights
    best_accuracy: float
    grid: list[tuple[FusionWeights, float]]

    def write_csv(self, path) -> None:
        n = len(self.best_weights)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"w{i + 1}" for i in range(n)] + ["accuracy"])
            for weights, acc in self.grid:
                w.writerow([f"{v:g}" for v in weights.weights] + [repr(acc)])


def fuse(scores, weights) -> np.ndarray:
    """sum_i w_i * p_i over branch score vectors (works on stacked clip matrices too)."""
    weights = weights if isinstance(weights, FusionWeights) else FusionWeights(weights)
    scores = [np.asarray(s, dtype=np.float64) for s in scores]
    if len(scores) != len(weights):
        raise ShapeError(f"{len(scores)} score sets for {len(weights)} weights")
    if len({s.shape for s in scores}) != 1:
        raise ShapeError(f"score shapes differ: {[s.shape for s in scores]}")
    out = np.zeros_like(scores[0])
    for w, s in zip(weights.weights, scores):
        out += w * s
    return out


def accuracy(predictions, labels) -> float:
    """Top-1 accuracy; ``argmax`` breaks ties toward the lowest class index."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(predictions) == 0:
        raise MetricError("accuracy of an empty prediction set")
    if len(predictions) != len(labels):
        raise MetricError(f"{len(predictions)} predictions vs {len(labels)} labels")
    return float(np.mean(predictions.argmax(axis=1) == labels))


def simplex_grid(n_parts: int, step: float = 0.1) -> list[tuple[float, ...]]:
    """All weight vectors with entries in multiples of ``step`` summing to 1, lexicographic order."""
    units = Fraction(1) / Fraction(step).limit_denominator(10**6)
    if units.denominator != 1:
        raise SearchError(f"step {step} does not divide 1")
    total = int(units)
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + (remaining,))
            return
        for k in range(remaining + 1):
            rec(prefix + (k,), remaining - k, slots - 1)

    rec((), total, n_parts)
    return [tuple(k / total for k in combo) for combo in out]


def grid_search_weights(branch_scores, labels, step: float = 0.1) -> FusionSearchResult:
    """Evaluate clip accuracy at every grid point; ties keep the lexicographically smallest weights.

    ``branch_scores`` is a sequence of (n_clips, n_classes) matrices, one per branch.
    """
    branch_scores = [np.asarray(s, dtype=np.float64) for s in branch_scores]
    labels = np.asarray(labels)
    if not branch_scores or len(labels) == 0 or branch_scores[0].shape[0] == 0:
        raise SearchError("fusion search needs a non-empty validation set")
    grid = []
    best = None
    for point in simplex_grid(len(branch_scores), step):
        w = FusionWeights(point)
        acc = accuracy(fuse(branch_scores, w), labels)
        grid.append((w, acc))
        if best is None or acc > best[1]:
            best = (w, acc)
    return FusionSearchResult(best[0], best[1], grid)
