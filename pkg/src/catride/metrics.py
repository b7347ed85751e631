"""Scalar metrics over embedding triplets: distances, triplet loss, hardness,
collapseness with anchor-proximity weighting, separability, entanglement.

Distance is Euclidean on L2-normalized embeddings, so every pair distance
lies in [0, 2] and hardness in [-2, 2].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateBatchError, EmptyBatchError, ShapeError


@dataclass
class MetricConfig:
    margin_triplet: float = 0.2
    attention: float = 0.0  # lambda; 0 disables anchor-proximity weighting
    hinge_enabled: bool = True

    def __post_init__(self):
        if self.margin_triplet <= 0:
            raise ConfigError("margin_triplet must be > 0")
        if self.attention < 0:
            raise ConfigError("attention factor must be >= 0")


def pair_distance(x, y):
    """Euclidean distance between two equally-shaped vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"vector shapes differ: {x.shape} vs {y.shape}")
    return float(np.linalg.norm(x - y))


def aligned_distances(X, Y):
    """Per-row distances ||x_i - y_i|| for aligned batches."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape:
        raise ShapeError(f"batch shapes differ: {X.shape} vs {Y.shape}")
    if X.shape[0] == 0:
        raise EmptyBatchError("empty batch")
    return np.linalg.norm(X - Y, axis=1)


def batch_distance(X, Y):
    """Mean over i of ||x_i - y_i||."""
    d = aligned_distances(X, Y)
    return float(np.sum(d) / len(d))


def triplet_loss(emb_a, emb_p, emb_n, cfg: MetricConfig):
    """Margin triplet loss d(A,P) - d(A,N) + beta, clamped at 0 when hinged."""
    raw = batch_distance(emb_a, emb_p) - batch_distance(emb_a, emb_n) + cfg.margin_triplet
    if cfg.hinge_enabled:
        return max(raw, 0.0)
    return raw


def hardness(emb_a, emb_p, emb_n):
    """d(A,P) - d(A,N); positive means the batch is hard for the model."""
    return batch_distance(emb_a, emb_p) - batch_distance(emb_a, emb_n)


def proximity_weight(d, d_min, attention):
    """Weight exp(-lambda (d - d_min)) of a single pair distance."""
    if d < d_min:
        raise ConfigError(f"d={d} below the batch minimum {d_min}")
    return float(np.exp(-attention * (d - d_min)))


def proximity_weights(distances, attention):
    """Per-pair weights relative to the batch minimum distance."""
    distances = np.asarray(distances, dtype=np.float64)
    if distances.size == 0:
        raise EmptyBatchError("empty batch")
    return np.exp(-attention * (distances - distances.min()))


def weighted_distance(A, X, attention):
    """Anchor-proximity weighted mean distance sum(w_i d_i) / sum(w_i)."""
    d = aligned_distances(A, X)
    w = proximity_weights(d, attention)
    return float(np.sum(w * d) / np.sum(w))


def collapseness(emb_a, emb_p, emb_n, attention):
    """Weighted hardness d_w(A,P) - d_w(A,N); positive signals impending collapse."""
    return weighted_distance(emb_a, emb_p, attention) - weighted_distance(
        emb_a, emb_n, attention
    )


def separability(emb_a, emb_p, emb_n, d_bar):
    """(d(A,N) - d(A,P)) / d_bar; positive iff negatives sit farther out."""
    if d_bar <= 0:
        raise DegenerateBatchError("d_bar must be > 0")
    return (batch_distance(emb_a, emb_n) - batch_distance(emb_a, emb_p)) / d_bar


def mean_pairwise_distance(embeddings):
    """Mean distance over all unordered pairs in a batch."""
    E = np.asarray(embeddings, dtype=np.float64)
    n = E.shape[0]
    if n < 2:
        raise DegenerateBatchError("need at least 2 samples for pairwise distances")
    sq = np.sum(E * E, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (E @ E.T), 0.0)
    iu = np.triu_indices(n, k=1)
    return float(np.mean(np.sqrt(d2[iu])))


def entanglement(d_intra, d_inter):
    """Mean intra-class distance over mean inter-class distance."""
    if d_inter <= 0:
        raise DegenerateBatchError("d_inter must be > 0")
    return d_intra / d_inter


def class_distance_stats(embeddings, labels):
    """(mean intra-class, mean inter-class) pair distances over a dataset."""
    E = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    n = E.shape[0]
    if n < 2:
        raise DegenerateBatchError("need at least 2 samples")
    sq = np.sum(E * E, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (E @ E.T), 0.0)
    d = np.sqrt(d2)
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(n, k=1)
    intra_mask = same[iu]
    d_flat = d[iu]
    if not intra_mask.any() or intra_mask.all():
        raise DegenerateBatchError("need both intra- and inter-class pairs")
    return float(d_flat[intra_mask].mean()), float(d_flat[~intra_mask].mean())
