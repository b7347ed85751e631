"""Triplet batches: aligned (anchor, positive, negative) index triples plus
their current (possibly perturbed) inputs and embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyBatchError, ShapeError, StateError


@dataclass
class TripletBatch:
    anchors: np.ndarray    # (B,) sample indices
    positives: np.ndarray  # (B,)
    negatives: np.ndarray  # (B,)
    inputs_a: np.ndarray   # (B, D) current anchor inputs (clean or perturbed)
    inputs_p: np.ndarray
    inputs_n: np.ndarray
    original_inputs_a: np.ndarray = None  # snapshot of unperturbed anchors
    emb_a: Optional[np.ndarray] = None
    emb_p: Optional[np.ndarray] = None
    emb_n: Optional[np.ndarray] = None
    fallback: np.ndarray = field(default=None)  # per-triplet semi-hard fallback flag

    def __post_init__(self):
        b = len(self.anchors)
        if b < 1:
            raise EmptyBatchError("triplet batch must contain at least one triplet")
        for name in ("positives", "negatives"):
            if len(getattr(self, name)) != b:
                raise ShapeError(f"{name} length != anchors length")
        for name in ("inputs_a", "inputs_p", "inputs_n"):
            arr = getattr(self, name)
            if arr.shape[0] != b:
                raise ShapeError(f"{name} has {arr.shape[0]} rows, expected {b}")
        if self.original_inputs_a is None:
            self.original_inputs_a = self.inputs_a.copy()
        if self.fallback is None:
            self.fallback = np.zeros(b, dtype=bool)

    def __len__(self):
        return len(self.anchors)

    @classmethod
    def from_indices(cls, dataset_inputs, anchors, positives, negatives, fallback=None):
        anchors = np.asarray(anchors, dtype=np.intp)
        positives = np.asarray(positives, dtype=np.intp)
        negatives = np.asarray(negatives, dtype=np.intp)
        return cls(
            anchors,
            positives,
            negatives,
            dataset_inputs[anchors].copy(),
            dataset_inputs[positives].copy(),
            dataset_inputs[negatives].copy(),
            fallback=fallback,
        )

    def embed(self, model):
        """Populate embeddings from the current inputs."""
        self.emb_a = model.forward(self.inputs_a)
        self.emb_p = model.forward(self.inputs_p)
        self.emb_n = model.forward(self.inputs_n)
        return self

    def embeddings(self):
        if self.emb_a is None or self.emb_p is None or self.emb_n is None:
            raise StateError("embeddings not populated; call embed(model) first")
        return self.emb_a, self.emb_p, self.emb_n
