"""Shared fixtures and numeric helpers for the test suite."""

import numpy as np
import pytest

from catride.data import Dataset, SynthSpec, generate_clusters, make_rng
from catride.model import EmbeddingModel
from catride.triplets import TripletBatch


def rng(seed=0):
    return make_rng(seed)


def unit_rows(generator, b, d):
    """Random points on the unit sphere, rows of shape (b, d)."""
    x = generator.normal(size=(b, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_triplet_embeddings(seed, b=6, d=8):
    g = make_rng(seed)
    return unit_rows(g, b, d), unit_rows(g, b, d), unit_rows(g, b, d)


def central_diff(f, x, h=1e-6):
    """Dense central finite-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def rel_error(analytic, numeric):
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / scale


@pytest.fixture
def small_model():
    return EmbeddingModel.initialize([8, 16, 16, 8], seed=3)


@pytest.fixture
def small_dataset():
    spec = SynthSpec(class_count=4, per_class=10, dim=8,
                     cluster_spread=0.05, center_separation=0.3, seed=5)
    return generate_clusters(spec)


@pytest.fixture
def small_batch(small_dataset):
    g = make_rng(17)
    labels = small_dataset.labels
    anchors, positives, negatives = [], [], []
    for _ in range(6):
        cls = int(g.integers(small_dataset.class_count))
        members = np.flatnonzero(labels == cls)
        a, p = g.choice(members, size=2, replace=False)
        n = int(g.choice(np.flatnonzero(labels != cls)))
        anchors.append(int(a))
        positives.append(int(p))
        negatives.append(n)
    return TripletBatch.from_indices(small_dataset.inputs, anchors, positives, negatives)
