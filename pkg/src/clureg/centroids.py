"""Label-driven centroid tracking and the combined training objective.

Centroids are running averages of per-batch class means computed from
labeled features, never gradient targets (except under the 'learned'
ablation strategy). Keeping them pinned to labeled data is what stops
the clustering head from collapsing and makes the usage prior
redundant (alpha = 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tape import Tensor, add, clamp_min, log, mul, reduce_sum


@dataclass
class CentroidTracker:
    """Per-class running mean of batch class means.

    counts[k] is the number of batches that contained class k; a row
    with counts[k] == 0 has never moved. The literal_batch_norm flag
    switches to the face-value update (class sums divided by the whole
    labeled batch size, one shared iteration counter, every class
    updated every time) kept around for comparison; the default
    class-conditional form is what training uses.
    """

    mu: np.ndarray
    counts: np.ndarray
    literal_batch_norm: bool = False
    global_tau: int = 0

    @staticmethod
    def zeros(k: int, d: int, literal_batch_norm: bool = False) -> "CentroidTracker":
        return CentroidTracker(np.zeros((k, d)), np.zeros(k, dtype=np.int64),
                               literal_batch_norm)

    @property
    def k(self) -> int:
        return len(self.counts)


def update_centroids(tracker: CentroidTracker, X_l: np.ndarray,
                     y_l: np.ndarray) -> CentroidTracker:
    """Fold one labeled batch into the running centroids."""
    X_l = np.asarray(X_l, dtype=np.float64)
    y_l = np.asarray(y_l, dtype=np.int64)
    if len(X_l) != len(y_l):
        raise ValueError("feature/label counts differ")
    if len(y_l) and (y_l.min() < 0 or y_l.max() >= tracker.k):
        raise ValueError(
            f"label outside [0, {tracker.k}): {y_l.min()}..{y_l.max()}"
        )
    if X_l.shape[1:] != tracker.mu.shape[1:]:
        raise ValueError(
            f"feature width {X_l.shape[1:]} does not match tracker {tracker.mu.shape[1:]}"
        )
    if len(y_l) == 0:
        return tracker

    if tracker.literal_batch_norm:
        tracker.global_tau += 1
        tau = tracker.global_tau
        n_batch = len(y_l)
        for k in range(tracker.k):
            class_sum = X_l[y_l == k].sum(axis=0)
            tracker.mu[k] = ((tau - 1) / tau) * tracker.mu[k] + class_sum / (tau * n_batch)
            if (y_l == k).any():
                tracker.counts[k] += 1
        return tracker

    for k in np.unique(y_l):
        batch_mean = X_l[y_l == k].mean(axis=0)
        tracker.counts[k] += 1
        c = tracker.counts[k]
        tracker.mu[k] = ((c - 1) / c) * tracker.mu[k] + batch_mean / c
    return tracker


def select_confident(gamma_t: np.ndarray, conf_threshold: float):
    """Rows whose top responsibility clears the threshold, with their
    argmax pseudo-labels."""
    if not 0.0 < conf_threshold <= 1.0:
        raise ValueError(f"confidence threshold must be in (0, 1], got {conf_threshold}")
    gamma_t = np.asarray(gamma_t, dtype=np.float64)
    if len(gamma_t) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    keep = gamma_t.max(axis=1) >= conf_threshold
    idx = np.flatnonzero(keep)
    return idx, gamma_t[idx].argmax(axis=1)


def augment_with_pseudo(tracker: CentroidTracker, X_l: np.ndarray, y_l: np.ndarray,
                        X_t: np.ndarray, gamma_t: np.ndarray,
                        conf_threshold: float) -> CentroidTracker:
    """One tracker update from the labeled batch plus the high-confidence
    slice of an unlabeled/target batch, pseudo-labeled by argmax."""
    idx, pseudo = select_confident(gamma_t, conf_threshold)
    X = np.concatenate([X_l, np.asarray(X_t, dtype=np.float64)[idx]], axis=0)
    y = np.concatenate([y_l, pseudo])
    return update_centroids(tracker, X, y)


@dataclass(frozen=True)
class CentroidStrategy:
    kind: str  # "gs" | "gs_pt" | "learned"
    conf_threshold: float = 0.9

    def __post_init__(self):
        if self.kind not in ("gs", "gs_pt", "learned"):
            raise ValueError(f"unknown centroid strategy {self.kind!r}")
        if not 0.0 < self.conf_threshold <= 1.0:
            raise ValueError(
                f"confidence threshold must be in (0, 1], got {self.conf_threshold}"
            )

    @property
    def tracker_driven(self) -> bool:
        return self.kind in ("gs", "gs_pt")


@dataclass(frozen=True)
class LossWeights:
    beta: float  # clustering loss weight
    delta: float  # base SSL/UDA loss weight
    alpha: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not np.isfinite(self.delta) or self.delta < 0:
            raise ValueError(f"delta must be finite and >= 0, got {self.delta}")


def cross_entropy(gamma: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log responsibility of the true class.

    `labels` may cover only the first rows of `gamma` (a labeled-then-
    unlabeled batch layout); trailing rows do not contribute.
    Responsibilities are clamped below at 1e-12 before the log.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_l = len(labels)
    if n_l == 0:
        raise ValueError("cross_entropy: empty labeled batch")
    n, k = gamma.value.shape
    if n_l > n:
        raise ValueError(f"{n_l} labels for {n} rows")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label outside [0, {k})")
    onehot = np.zeros((n, k))
    onehot[np.arange(n_l), labels] = 1.0
    return mul(reduce_sum(mul(log(clamp_min(gamma, 1e-12)), onehot)), -1.0 / n_l)


def combined_loss(gamma_l: Tensor, labels: np.ndarray, cm_total: Tensor | float,
                       base_loss: Tensor | float, weights: LossWeights):
    """CE + beta * clustering loss + delta * base loss.

    Returns the scalar tape node and a float breakdown. Zero-weighted
    terms are folded in as exact zeros, so the value (and every
    gradient) degenerates bit-for-bit to plain CE when beta = delta = 0.
    """
    ce = cross_entropy(gamma_l, labels)
    total = ce
    for w, term in ((weights.beta, cm_total), (weights.delta, base_loss)):
        if isinstance(term, Tensor):
            total = add(total, mul(term, w))
        elif w != 0.0 and term != 0.0:
            total = add(total, w * float(term))
    breakdown = {
        "ce": float(ce.value),
        "cm_total": float(cm_total.value) if isinstance(cm_total, Tensor) else float(cm_total),
        "base": float(base_loss.value) if isinstance(base_loss, Tensor) else float(base_loss),
        "total": float(total.value),
    }
    return total, breakdown


def predict(gamma) -> np.ndarray:
    """Argmax readout; ties resolve to the lowest class index."""
    g = gamma.value if isinstance(gamma, Tensor) else np.asarray(gamma)
    return g.argmax(axis=1)
