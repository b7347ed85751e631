"""Outer adversarial-training loop: semi-hard triplet sampling with an
epoch-wise shrinking window, CAP/ANP alternation (CAP first), the phase-split
training objective, Adam updates, and per-batch collapse diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import losses, metrics
from .adversary import PerturbationConfig, pgd_perturb
from .data import Dataset, make_rng
from .errors import ConfigError, NumericError, ParseError, SamplingError
from .model import EmbeddingModel
from .triplets import TripletBatch

MODES = ("benign", "sip", "hm", "ca-cap", "ca-anp", "ca-tride", "cap", "anp", "tride")

COLLAPSE_LOG_FORMAT_VERSION = 1

LOG_FIELDS = (
    "epoch",
    "batch",
    "phase",
    "d_bar",
    "separability",
    "hardness",
    "collapseness",
    "mean_shift",
    "loss",
)


@dataclass
class TrainConfig:
    mode: str = "ca-tride"
    epochs: int = 100
    batch_size: int = 112
    learning_rate: float = 1e-3
    eta0: float = 1.6            # semi-hard window base
    attention: float = 200.0     # lambda; ignored by the CA-disabled modes
    margin_triplet: float = 0.2
    hinge: bool = True
    epsilon: float = 8.0 / 255.0
    alpha: float = 1.0 / 255.0
    max_steps: int = 16
    gamma: float = 0.5
    margin_toprank: float = 0.04
    h_destination: float = 0.0
    progressive_alpha: bool = True
    hidden_dims: tuple = (64, 64)
    embedding_dim: int = 16
    checkpoint_every: int = 1
    seed: int = 0
    log_sip_comparison: bool = True  # extra shift measurement in ca-tride runs

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.eta0 <= 0:
            raise ConfigError("eta0 must be > 0")
        if self.attention < 0:
            raise ConfigError("attention must be >= 0")

    def metric_config(self):
        return metrics.MetricConfig(
            margin_triplet=self.margin_triplet,
            attention=self.attention,
            hinge_enabled=self.hinge,
        )


def eta_schedule(n, n_total, eta0):
    """Semi-hard window eta0 * (1 - (n / (2 n_total))^2) for epoch n."""
    if n_total <= 0:
        raise ConfigError("n_total must be >= 1")
    if not (0 <= n <= n_total):
        raise ConfigError("epoch index out of range")
    return eta0 * (1.0 - (n / (2.0 * n_total)) ** 2)


def alpha_fraction(n, n_total, enabled=True):
    """Progressive step-size multiplier n / n_total (1 when disabled)."""
    if not enabled:
        return 1.0
    return n / n_total


# -- Adam -------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(params, grads, state: AdamState, lr):
    """One bias-corrected Adam update, in place on `params`."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ConfigError("Adam state does not match the parameter list")
    state.t += 1
    b1t = 1.0 - ADAM_BETA1 ** state.t
    b2t = 1.0 - ADAM_BETA2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / b1t) / (np.sqrt(v / b2t) + ADAM_EPS)


# -- sampling ---------------------------------------------------------------

def semi_hard_sample(embeddings, labels, eta, batch_size, rng):
    """Sample B triplets whose negatives fall in the semi-hard window
    d(a,p) < d(a,n) < d(a,p) + eta, with a nearest-beyond fallback.

    Anchors are drawn class-balanced: B/2 anchor-positive pairs, each used
    twice with an independently drawn negative.
    """
    if eta <= 0:
        raise SamplingError("eta must be > 0")
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise SamplingError("need at least 2 classes to form triplets")
    for cls in classes:
        if np.sum(labels == cls) < 2:
            raise SamplingError(f"class {cls} has fewer than 2 samples")

    n_pairs = (batch_size + 1) // 2
    order = rng.permutation(classes)
    anchors, positives, negatives, fallback = [], [], [], []
    for k in range(n_pairs):
        cls = order[k % len(order)]
        members = np.flatnonzero(labels == cls)
        a, p = rng.choice(members, size=2, replace=False)
        d_ap = float(np.linalg.norm(embeddings[a] - embeddings[p]))
        others = np.flatnonzero(labels != cls)
        d_an = np.linalg.norm(embeddings[others] - embeddings[a], axis=1)
        in_window = others[(d_an > d_ap) & (d_an < d_ap + eta)]
        for _ in range(2):
            if len(anchors) == batch_size:
                break
            if len(in_window) > 0:
                neg = int(rng.choice(in_window))
                fell_back = False
            else:
                beyond = d_an > d_ap
                if beyond.any():
                    pick = np.flatnonzero(beyond)[np.argmin(d_an[beyond])]
                else:
                    pick = int(np.argmin(d_an))
                neg = int(others[pick])
                fell_back = True
            anchors.append(int(a))
            positives.append(int(p))
            negatives.append(neg)
            fallback.append(fell_back)
    return (
        np.array(anchors, dtype=np.intp),
        np.array(positives, dtype=np.intp),
        np.array(negatives, dtype=np.intp),
        np.array(fallback, dtype=bool),
    )


# -- the training loop ------------------------------------------------------

def phase_for_batch(mode, global_batch):
    """Perturbation phase ('cap'/'anp'/'sip'/'hm'/None) for a mini-batch."""
    if mode == "benign":
        return None
    if mode in ("sip",):
        return "sip"
    if mode == "hm":
        return "hm"
    if mode in ("ca-cap", "cap"):
        return "cap"
    if mode in ("ca-anp", "anp"):
        return "anp"
    # tride variants alternate mini-batch-wise, starting with CAP
    return "cap" if global_batch % 2 == 0 else "anp"


def _perturbation_config(cfg: TrainConfig, phase):
    if phase == "hm":
        return PerturbationConfig(
            epsilon=cfg.epsilon,
            alpha=cfg.alpha,
            max_steps=cfg.max_steps,
            phase="sip",
            gamma=cfg.gamma,
            margin_toprank=cfg.margin_toprank,
            loss_kind="hm",
            h_destination=cfg.h_destination,
        )
    return PerturbationConfig(
        epsilon=cfg.epsilon,
        alpha=cfg.alpha,
        max_steps=cfg.max_steps,
        phase=phase,
        gamma=cfg.gamma,
        margin_toprank=cfg.margin_toprank,
        loss_kind="ca" if cfg.mode.startswith("ca-") else "naive",
    )


def _model_params(model):
    return model.weights + model.biases


def _model_loss_grads(model, phase, batch, cfg: TrainConfig):
    """Training loss value and parameter gradients after perturbation."""
    emb_a, emb_p, emb_n = batch.embeddings()
    loss, ga, gp, gn = losses.triplet_loss_grad(
        emb_a, emb_p, emb_n, cfg.margin_triplet, hinge=cfg.hinge
    )
    if phase == "anp" and cfg.gamma != 0.0:
        tr, ta, tp, tn = losses.top_rank_triplet_grad(
            emb_a, emb_p, emb_n, cfg.gamma, cfg.margin_toprank, hinge=cfg.hinge
        )
        loss += tr
        ga, gp, gn = ga + ta, gp + tp, gn + tn

    bundles = [
        model.backward(batch.inputs_a, ga),
        model.backward(batch.inputs_p, gp),
        model.backward(batch.inputs_n, gn),
    ]
    weight_grads = [sum(b.weight_grads[i] for b in bundles) for i in range(len(model.weights))]
    bias_grads = [sum(b.bias_grads[i] for b in bundles) for i in range(len(model.biases))]
    return loss, weight_grads + bias_grads


def train_step(model, batch: TripletBatch, cfg: TrainConfig, phase, adam_state,
               epoch_fraction=1.0):
    """Process one mini-batch: diagnose, perturb, update, log.

    Returns the collapse-log record for the batch. `batch` must carry clean
    inputs; `phase` is None for benign training.
    """
    batch.embed(model)
    emb_a, emb_p, emb_n = batch.embeddings()
    d_bar = metrics.mean_pairwise_distance(np.vstack([emb_a, emb_p, emb_n]))
    # Hardness/collapseness are diagnosed on the clean triplets; d_bar and
    # separability are recomputed below on the triplets the model is actually
    # trained on (perturbed, when a phase is active), so the log reflects the
    # training signal rather than the mining window.
    record = {
        "phase": phase or "benign",
        "d_bar": d_bar,
        "separability": metrics.separability(emb_a, emb_p, emb_n, d_bar)
        if d_bar > 0
        else 0.0,
        "hardness": metrics.hardness(emb_a, emb_p, emb_n),
        "collapseness": metrics.collapseness(emb_a, emb_p, emb_n, cfg.attention),
        "mean_shift": 0.0,
        "n_perturbed": 0,
        "fallback_count": int(batch.fallback.sum()),
    }

    if phase is None:
        train_batch = batch
    else:
        result = pgd_perturb(
            model,
            batch,
            _perturbation_config(cfg, phase),
            cfg.attention,
            epoch_fraction=epoch_fraction,
        )
        train_batch = result.batch
        if d_bar > 0 and len(result.shifts):
            record["mean_shift"] = float(np.mean(result.shifts)) / d_bar
        record["n_perturbed"] = result.perturbed_count
        train_batch.embed(model)
        pa, pp, pn = train_batch.embeddings()
        pd_bar = metrics.mean_pairwise_distance(np.vstack([pa, pp, pn]))
        record["d_bar"] = pd_bar
        record["separability"] = (
            metrics.separability(pa, pp, pn, pd_bar) if pd_bar > 0 else 0.0
        )
        record["pgd_steps"] = result.steps_taken
        if cfg.mode == "ca-tride" and cfg.log_sip_comparison:
            sip_cfg = _perturbation_config(cfg, "sip")
            sip_cfg.loss_kind = "ca"
            sip = pgd_perturb(model, batch, sip_cfg, cfg.attention,
                              epoch_fraction=epoch_fraction)
            if d_bar > 0 and len(sip.shifts):
                record["mean_shift_sip"] = float(np.mean(sip.shifts)) / d_bar
            else:
                record["mean_shift_sip"] = 0.0

    loss, grads = _model_loss_grads(model, phase, train_batch, cfg)
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss; restore the last checkpoint")
    record["loss"] = loss
    adam_step(_model_params(model), grads, adam_state, cfg.learning_rate)
    return record


@dataclass
class TrainResult:
    model: EmbeddingModel
    log: list
    checkpoints: dict = field(default_factory=dict)  # {"last": ..., "best": ...}
    best_recall: float = 0.0


def run_training(dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """Train a model on `dataset` per `cfg`; deterministic given the seed."""
    dims = [dataset.dim, *cfg.hidden_dims, cfg.embedding_dim]
    model = EmbeddingModel.initialize(dims, cfg.seed)
    adam_state = AdamState.for_params(_model_params(model))
    rng = make_rng((cfg.seed, 0x5EED))
    log = []
    checkpoints = {"last": model.to_checkpoint(seed=cfg.seed)}
    best_recall = -1.0

    batches_per_epoch = max(1, len(dataset) // cfg.batch_size)
    global_batch = 0
    for epoch in range(1, cfg.epochs + 1):
        eta = eta_schedule(epoch - 1, cfg.epochs, cfg.eta0)
        frac = alpha_fraction(epoch, cfg.epochs, enabled=cfg.progressive_alpha)
        # Mining embeddings are refreshed once per epoch; within an epoch the
        # sampler works from the epoch-start snapshot, so the logged
        # separability (fresh embeddings) can drift below the mining window.
        all_emb = model.forward(dataset.inputs)
        for b in range(batches_per_epoch):
            a_idx, p_idx, n_idx, fb = semi_hard_sample(
                all_emb, dataset.labels, eta, cfg.batch_size, rng
            )
            batch = TripletBatch.from_indices(dataset.inputs, a_idx, p_idx, n_idx, fallback=fb)
            phase = phase_for_batch(cfg.mode, global_batch)
            record = train_step(model, batch, cfg, phase, adam_state, epoch_fraction=frac)
            record.update({"epoch": epoch, "batch": b, "global_batch": global_batch})
            log.append(record)
            global_batch += 1
        if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            checkpoints["last"] = model.to_checkpoint(seed=cfg.seed)
            recall = _train_recall(model, dataset)
            if recall > best_recall:
                best_recall = recall
                checkpoints["best"] = model.to_checkpoint(seed=cfg.seed)
    checkpoints["last"] = model.to_checkpoint(seed=cfg.seed)
    checkpoints.setdefault("best", checkpoints["last"])
    return TrainResult(model=model, log=log, checkpoints=checkpoints,
                       best_recall=max(best_recall, 0.0))


def _train_recall(model, dataset):
    from .evaluation import recall_at_k

    return recall_at_k(model, dataset.inputs, dataset.labels, k=1)


# -- collapse-log I/O -------------------------------------------------------

def write_collapse_log(records, path):
    with open(path, "w") as fh:
        for rec in records:
            ordered = {k: rec[k] for k in LOG_FIELDS if k in rec}
            extras = {k: v for k, v in rec.items() if k not in LOG_FIELDS}
            ordered.update(sorted(extras.items()))
            fh.write(json.dumps(ordered) + "\n")


def read_collapse_log(path):
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return records


def config_to_dict(cfg: TrainConfig):
    d = asdict(cfg)
    d["hidden_dims"] = list(d["hidden_dims"])
    return d


def config_from_dict(d):
    d = dict(d)
    if "hidden_dims" in d:
        d["hidden_dims"] = tuple(d["hidden_dims"])
    return TrainConfig(**d)
