"""Collapse-aware triplet-decoupled adversarial training for metric-learning
embeddings, with collapse diagnostics, a geometric shift analysis, and an
adversarial-resistance evaluation suite."""

__version__ = "0.1.0"

from .data import Dataset, SynthSpec, generate_clusters, load_csv, save_csv, split
from .model import EmbeddingModel, GradientBundle
from .triplets import TripletBatch
from .adversary import PerturbationConfig, PerturbationResult, pgd_perturb
from .trainer import TrainConfig, TrainResult, run_training
from .geometry import TripletGeometry, closed_form_shift, numeric_shift_oracle

__all__ = [
    "Dataset",
    "SynthSpec",
    "generate_clusters",
    "load_csv",
    "save_csv",
    "split",
    "EmbeddingModel",
    "GradientBundle",
    "TripletBatch",
    "PerturbationConfig",
    "PerturbationResult",
    "pgd_perturb",
    "TrainConfig",
    "TrainResult",
    "run_training",
    "TripletGeometry",
    "closed_form_shift",
    "numeric_shift_oracle",
    "__version__",
]
