"""Seeded synthetic datasets, CSV ingestion, and stratified splits.

Generation is a pure function of (spec, seed); the RNG is PCG64 so the
stream is fully determined by the recorded seed. The `entangled` preset
produces overlapping clusters that make hard-mining training collapse-prone;
the `separated` preset is linearly separable in input space.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ParseError, SamplingError, ValidationError

DATASET_FORMAT_VERSION = 1

RNG_ALGORITHM = "pcg64"


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class SynthSpec:
    class_count: int = 8
    per_class: int = 40
    dim: int = 32
    cluster_spread: float = 0.06
    center_separation: float = 0.35
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise ConfigError("need at least 2 classes")
        if self.per_class < 2:
            raise ConfigError("need at least 2 samples per class")
        if self.cluster_spread <= 0:
            raise ConfigError("cluster_spread must be > 0")
        if self.center_separation <= 0:
            raise ConfigError("center_separation must be > 0")


# Preset knobs: `separated` gives clean, linearly separable clusters;
# `entangled` overlaps them enough that a benign-trained model lands in the
# 0.6-0.9 entanglement band while hard mining can still collapse training.
PRESETS = {
    "separated": {"cluster_spread": 0.02, "center_separation": 0.45},
    "entangled": {"cluster_spread": 0.12, "center_separation": 0.22},
}


def preset_spec(name, class_count=8, per_class=40, dim=32, seed=0):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return SynthSpec(
        class_count=class_count,
        per_class=per_class,
        dim=dim,
        seed=seed,
        **PRESETS[name],
    )


@dataclass
class Dataset:
    inputs: np.ndarray   # (n, D) in [0, 1]
    labels: np.ndarray   # (n,) int
    ids: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or len(self.labels) != len(self.inputs):
            raise ValidationError("inputs must be (n, D) with one label per row")
        if self.ids is None:
            self.ids = np.arange(len(self.labels))
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValidationError("sample ids must be unique")
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise ValidationError("all input coordinates must lie in [0, 1]")
        classes, counts = np.unique(self.labels, return_counts=True)
        if len(classes) and counts.min() < 2:
            small = classes[counts.argmin()]
            raise ValidationError(f"class {small} has fewer than 2 samples")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def class_count(self):
        return len(np.unique(self.labels))


def generate_clusters(spec: SynthSpec) -> Dataset:
    """Gaussian clusters truncated to the unit box, deterministic per seed."""
    rng = make_rng(spec.seed)
    lo, hi = 0.2, 0.8
    centers = rng.uniform(lo, hi, size=(spec.class_count, spec.dim))
    # Rescale center deviations so the mean pairwise center distance matches
    # the requested separation.
    centroid = centers.mean(axis=0)
    diffs = centers[:, None, :] - centers[None, :, :]
    iu = np.triu_indices(spec.class_count, k=1)
    mean_dist = float(np.linalg.norm(diffs[iu[0], iu[1]], axis=1).mean())
    scale = spec.center_separation / mean_dist
    centers = centroid + (centers - centroid) * scale
    if centers.min() < lo - 1e-9 or centers.max() > hi + 1e-9:
        raise ConfigError(
            "center_separation too large: scaled centers leave the [0.2, 0.8] box"
        )
    samples = centers[:, None, :] + rng.normal(
        0.0, spec.cluster_spread, size=(spec.class_count, spec.per_class, spec.dim)
    )
    inputs = np.clip(samples.reshape(-1, spec.dim), 0.0, 1.0)
    labels = np.repeat(np.arange(spec.class_count), spec.per_class)
    provenance = {"generator": asdict(spec), "rng": RNG_ALGORITHM}
    return Dataset(inputs, labels, provenance=provenance)


def save_csv(dataset: Dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"f{i}" for i in range(dataset.dim)])
        for sid, label, row in zip(dataset.ids, dataset.labels, dataset.inputs):
            writer.writerow([int(sid), int(label)] + [repr(float(v)) for v in row])


def load_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if len(header) < 3 or header[:2] != ["id", "label"]:
            raise _parse_error(path, 1, "header must be id,label,f0..f{D-1}")
        dim = len(header) - 2
        if header[2:] != [f"f{i}" for i in range(dim)]:
            raise _parse_error(path, 1, "feature columns must be named f0..f{D-1}")
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 2:
                raise _parse_error(path, lineno, f"expected {dim + 2} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]))
                feats = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise _parse_error(path, lineno, str(exc)) from exc
            if min(feats) < 0.0 or max(feats) > 1.0:
                raise ValidationError(f"{path}:{lineno}: feature outside [0, 1]")
            rows.append(feats)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    digest = hashlib.sha256(open(path, "rb").read()).hexdigest()
    return Dataset(
        np.array(rows),
        np.array(labels),
        ids=np.array(ids),
        provenance={"source": str(path), "sha256": digest},
    )


def _parse_error(path, lineno, msg):
    return ParseError(f"{path}:{lineno}: {msg}")


def split(dataset: Dataset, train_fraction, seed):
    """Stratified, disjoint, deterministic train/test split."""
    if not (0.0 < train_fraction < 1.0):
        raise ConfigError("train_fraction must be in (0, 1)")
    rng = make_rng(seed)
    train_idx, test_idx = [], []
    for cls in np.unique(dataset.labels):
        members = np.flatnonzero(dataset.labels == cls)
        perm = rng.permutation(members)
        n_train = int(round(train_fraction * len(members)))
        if n_train < 2 or len(members) - n_train < 2:
            raise SamplingError(
                f"class {cls} too small for both splits at fraction {train_fraction}"
            )
        train_idx.extend(perm[:n_train])
        test_idx.extend(perm[n_train:])
    train_idx = np.sort(np.array(train_idx))
    test_idx = np.sort(np.array(test_idx))

    def take(idx, tag):
        return Dataset(
            dataset.inputs[idx].copy(),
            dataset.labels[idx].copy(),
            ids=dataset.ids[idx].copy(),
            provenance={**dataset.provenance, "split": tag, "split_seed": seed},
        )

    return take(train_idx, "train"), take(test_idx, "test")
