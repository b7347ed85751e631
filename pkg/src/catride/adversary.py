"""Sign-PGD perturbation of triplet batches under an l-inf budget.

Three phases are supported: CAP perturbs positives and negatives (each with
its own per-sample delta), ANP perturbs only the anchors, SIP perturbs all
three. Each step moves every targeted input by alpha * epoch_fraction in
the direction that decreases the phase loss (equivalently increases the
adversarial objective), then projects back onto the l-inf ball and the
[0, 1] input box. Clipped losses terminate the loop early once they reach 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import losses
from .errors import ConfigError, NumericError
from .metrics import aligned_distances
from .triplets import TripletBatch

PHASES = ("cap", "anp", "sip")
LOSS_KINDS = ("ca", "naive", "hm")


@dataclass
class PerturbationConfig:
    epsilon: float = 8.0 / 255.0
    alpha: float = 1.0 / 255.0
    max_steps: int = 16
    phase: str = "cap"
    gamma: float = 0.5
    margin_toprank: float = 0.04
    loss_kind: str = "ca"        # "ca": clipped collapse-aware; "naive": unclipped; "hm"
    h_destination: float = 0.0   # target hardness for the "hm" loss

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}")


@dataclass
class PerturbationResult:
    batch: TripletBatch
    delta_a: np.ndarray
    delta_p: np.ndarray
    delta_n: np.ndarray
    steps_taken: int
    final_loss: float
    final_collapseness: float
    shifts: np.ndarray           # embedding shift per perturbed sample
    perturbed_count: int = 0
    trace: list = field(default_factory=list)


def phase_targets(phase):
    """Which of (anchors, positives, negatives) a phase perturbs."""
    return {
        "cap": (False, True, True),
        "anp": (True, False, False),
        "sip": (True, True, True),
    }[phase]


def phase_loss(emb_a, emb_p, emb_n, emb_a0, cfg, attention):
    """Value and embedding gradients of the phase's adversarial loss."""
    clip = cfg.loss_kind == "ca"
    att = attention if cfg.loss_kind == "ca" else 0.0
    if cfg.loss_kind == "hm":
        return losses.hm_loss_grad(emb_a, emb_p, emb_n, cfg.h_destination)
    if cfg.phase == "anp":
        return losses.anp_loss_grad(emb_a, emb_p, emb_n, emb_a0, att, clip=clip)
    # cap and sip share the collapseness objective; sip just perturbs all three
    return losses.cap_loss_grad(emb_a, emb_p, emb_n, att, clip=clip)


def pgd_perturb(model, batch, cfg, attention, epoch_fraction=1.0, trace=None):
    """Run Algorithm-style sign-PGD on a clean triplet batch.

    Returns a PerturbationResult whose batch carries the perturbed inputs and
    refreshed embeddings. The input batch is not modified.
    """
    if not (0.0 < epoch_fraction <= 1.0):
        raise ConfigError("epoch_fraction must be in (0, 1]")

    clean_a = batch.inputs_a.copy()
    clean_p = batch.inputs_p.copy()
    clean_n = batch.inputs_n.copy()
    x_a, x_p, x_n = clean_a.copy(), clean_p.copy(), clean_n.copy()

    emb_a0 = model.forward(clean_a)
    emb_clean = {
        "a": emb_a0,
        "p": model.forward(clean_p),
        "n": model.forward(clean_n),
    }

    move_a, move_p, move_n = phase_targets(cfg.phase)
    step = cfg.alpha * epoch_fraction
    clipped = cfg.loss_kind == "ca"

    steps_taken = 0
    loss = 0.0
    for _ in range(cfg.max_steps):
        emb_a = model.forward(x_a) if move_a else emb_clean["a"]
        emb_p = model.forward(x_p) if move_p else emb_clean["p"]
        emb_n = model.forward(x_n) if move_n else emb_clean["n"]
        loss, ga, gp, gn = phase_loss(emb_a, emb_p, emb_n, emb_a0, cfg, attention)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite adversarial loss at step {steps_taken}")
        if trace is not None:
            wp, wn = losses.frozen_weights(emb_a, emb_p, emb_n, attention)
            trace.append(
                {
                    "iteration": steps_taken,
                    "loss": loss,
                    "collapseness": losses.collapseness_frozen(emb_a, emb_p, emb_n, wp, wn),
                    "mean_shift": _mean_shift(model, cfg.phase, x_a, x_p, x_n, emb_clean),
                }
            )
        if clipped and loss == 0.0:
            break
        if cfg.epsilon == 0.0:
            break  # zero budget: projection would undo any step

        if move_a:
            x_a = _apply_step(model, x_a, clean_a, ga, step, cfg.epsilon)
        if move_p:
            x_p = _apply_step(model, x_p, clean_p, gp, step, cfg.epsilon)
        if move_n:
            x_n = _apply_step(model, x_n, clean_n, gn, step, cfg.epsilon)
        steps_taken += 1

    out = TripletBatch(
        batch.anchors.copy(),
        batch.positives.copy(),
        batch.negatives.copy(),
        x_a,
        x_p,
        x_n,
        original_inputs_a=clean_a,
        fallback=batch.fallback.copy(),
    )
    out.embed(model)

    shifts = []
    count = 0
    if move_a:
        shifts.append(aligned_distances(out.emb_a, emb_clean["a"]))
        count += len(out)
    if move_p:
        shifts.append(aligned_distances(out.emb_p, emb_clean["p"]))
        count += len(out)
    if move_n:
        shifts.append(aligned_distances(out.emb_n, emb_clean["n"]))
        count += len(out)
    shifts = np.concatenate(shifts) if shifts else np.zeros(0)

    wp, wn = losses.frozen_weights(out.emb_a, out.emb_p, out.emb_n, attention)
    final_c = losses.collapseness_frozen(out.emb_a, out.emb_p, out.emb_n, wp, wn)
    return PerturbationResult(
        batch=out,
        delta_a=x_a - clean_a,
        delta_p=x_p - clean_p,
        delta_n=x_n - clean_n,
        steps_taken=steps_taken,
        final_loss=loss,
        final_collapseness=final_c,
        shifts=shifts,
        perturbed_count=count,
        trace=trace if trace is not None else [],
    )


def _apply_step(model, x, clean, emb_grad, step, epsilon):
    grads = model.backward(x, emb_grad).input_grads
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite input gradient during PGD")
    x_new = x - step * np.sign(grads)
    delta = np.clip(x_new - clean, -epsilon, epsilon)
    return np.clip(clean + delta, 0.0, 1.0)


def _mean_shift(model, phase, x_a, x_p, x_n, emb_clean):
    move_a, move_p, move_n = phase_targets(phase)
    parts = []
    if move_a:
        parts.append(aligned_distances(model.forward(x_a), emb_clean["a"]))
    if move_p:
        parts.append(aligned_distances(model.forward(x_p), emb_clean["p"]))
    if move_n:
        parts.append(aligned_distances(model.forward(x_n), emb_clean["n"]))
    return float(np.mean(np.concatenate(parts))) if parts else 0.0
