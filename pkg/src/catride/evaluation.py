"""Benign retrieval metrics (R@k, mAP), desk-scale ranking and recall
attacks, and Adversarial Resistance Score (ARS) aggregation.

Rank convention: for each query the gallery (the query itself excluded) is
sorted by ascending distance with stable index tie-break; the best rank is 0.
ARS measures how much of an attack's intended change the model resisted:
100 means no impact, 0 means the attack fully reached its goal.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from .data import make_rng
from .errors import ConfigError, DegenerateBatchError, EmptyBatchError
from .metrics import aligned_distances

ATTACK_KINDS = ("ca+", "ca-", "qa+", "qa-", "recall")

ATTACK_REPORT_FORMAT_VERSION = 1


# -- ranking ----------------------------------------------------------------

def gallery_ranking(query_emb, gallery_emb):
    """Gallery indices sorted ascending by distance to the query (stable)."""
    d = np.linalg.norm(gallery_emb - query_emb, axis=1)
    return np.argsort(d, kind="stable")


def rank_of(query_emb, gallery_emb, candidate_pos):
    """0-based rank of one gallery row for a query."""
    order = gallery_ranking(query_emb, gallery_emb)
    return int(np.flatnonzero(order == candidate_pos)[0])


def _leave_one_out(embeddings, i):
    mask = np.ones(len(embeddings), dtype=bool)
    mask[i] = False
    return embeddings[mask], mask


def recall_at_k(model, inputs, labels, k=1, gallery_inputs=None, gallery_labels=None):
    """Percent of queries whose top-k gallery contains a same-label sample.

    Without an explicit gallery the queries retrieve against each other,
    leave-one-out.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    labels = np.asarray(labels)
    q_emb = model.forward(inputs)
    self_retrieval = gallery_inputs is None
    if self_retrieval:
        g_emb, g_labels = q_emb, labels
    else:
        g_emb = model.forward(gallery_inputs)
        g_labels = np.asarray(gallery_labels)
    if len(g_emb) == 0:
        raise EmptyBatchError("empty gallery")
    hits = 0
    for i in range(len(q_emb)):
        if self_retrieval:
            emb, mask = _leave_one_out(g_emb, i)
            lab = g_labels[mask]
        else:
            emb, lab = g_emb, g_labels
        order = gallery_ranking(q_emb[i], emb)
        hits += bool(np.any(lab[order[:k]] == labels[i]))
    return 100.0 * hits / len(q_emb)


def mean_average_precision(model, inputs, labels, gallery_inputs=None, gallery_labels=None):
    """Standard retrieval mAP (percent), averaged over queries."""
    labels = np.asarray(labels)
    q_emb = model.forward(inputs)
    self_retrieval = gallery_inputs is None
    if self_retrieval:
        g_emb, g_labels = q_emb, labels
    else:
        g_emb = model.forward(gallery_inputs)
        g_labels = np.asarray(gallery_labels)
    aps = []
    for i in range(len(q_emb)):
        if self_retrieval:
            emb, mask = _leave_one_out(g_emb, i)
            lab = g_labels[mask]
        else:
            emb, lab = g_emb, g_labels
        order = gallery_ranking(q_emb[i], emb)
        rel = (lab[order] == labels[i]).astype(float)
        n_pos = rel.sum()
        if n_pos == 0:
            continue  # query class absent from gallery: skip the trial
        cum = np.cumsum(rel)
        precision = cum / np.arange(1, len(rel) + 1)
        aps.append(float(np.sum(precision * rel) / n_pos))
    if not aps:
        raise EmptyBatchError("no query had a same-label gallery sample")
    return 100.0 * float(np.mean(aps))


# -- ARS --------------------------------------------------------------------

def ars_general(o_i, o_r, o_g, clamp=True):
    """Percent of the attack's intended change (o_i -> o_g) that was resisted."""
    if o_g == o_i:
        raise DegenerateBatchError("o_g = o_i: attack goal equals initial state")
    value = (1.0 - (o_r - o_i) / (o_g - o_i)) * 100.0
    if clamp:
        value = min(max(value, 0.0), 100.0)
    return value


def ars_ranking_paper(r, r_tilde, clamp=True):
    """(1 - |r - r~| / r) * 100 for a single ranking trial."""
    if r == 0:
        raise DegenerateBatchError("initial rank 0 is a degenerate ranking trial")
    value = (1.0 - abs(r - r_tilde) / r) * 100.0
    if clamp:
        value = min(max(value, 0.0), 100.0)
    return value


def ars_recall_paper(mu, mu_tilde):
    """After-attack over before-attack R@1, as a percent."""
    if mu == 0:
        raise DegenerateBatchError("benign R@1 of 0 is a degenerate recall trial")
    return mu_tilde / mu * 100.0


def overall_ars(per_attack):
    """Unweighted mean of the per-attack ARS values."""
    values = list(per_attack)
    if not values:
        raise EmptyBatchError("no attack results to aggregate")
    return float(np.mean(values))


# -- attacks ----------------------------------------------------------------

@dataclass
class AttackTrial:
    kind: str
    query: int
    target: int
    o_i: float
    o_r: float
    o_g: float
    ars_general: float
    ars_general_raw: float
    ars_paper: float
    ars_paper_raw: float


def _pgd_distance(model, x, anchor_emb, cfg, minimize):
    """Sign-PGD on one input, pushing its embedding toward or away from a
    fixed target embedding (or the mean of several)."""
    clean = x.copy()
    cur = x.copy()
    best = cur.copy()
    best_d = None
    for _ in range(cfg.max_steps):
        emb = model.forward(cur)
        diff = emb - anchor_emb
        d = np.linalg.norm(diff, axis=1, keepdims=True)
        score = float(np.mean(d))
        if best_d is None or (score < best_d if minimize else score > best_d):
            best_d = score
            best = cur.copy()
        g_emb = diff / np.maximum(d, 1e-300)
        if not minimize:
            g_emb = -g_emb
        grads = model.backward(cur, g_emb).input_grads
        cur = cur - cfg.alpha * np.sign(grads)
        delta = np.clip(cur - clean, -cfg.epsilon, cfg.epsilon)
        cur = np.clip(clean + delta, 0.0, 1.0)
    # keep the best iterate seen: sign-PGD oscillates once it hits the
    # budget boundary, so the last iterate is often not the strongest
    emb = model.forward(cur)
    score = float(np.mean(np.linalg.norm(emb - anchor_emb, axis=1)))
    if score < best_d if minimize else score > best_d:
        return cur
    return best


def attack_rank(model, inputs, labels, kind, rng, cfg):
    """One ranking-attack trial; returns an AttackTrial or None if the drawn
    target is degenerate (initial rank equals the goal)."""
    n = len(inputs)
    emb = model.forward(inputs)
    q = int(rng.integers(n))
    others = np.flatnonzero(np.arange(n) != q)
    order = gallery_ranking(emb[q], emb[others])
    g_size = n - 1
    # middle-half targets: keeps the initial state away from both goals
    lo, hi = g_size // 4, (3 * g_size) // 4
    r0 = int(rng.integers(lo, max(hi, lo + 1)))
    target = int(others[order[r0]])
    o_g = 0.0 if kind.endswith("+") else float(g_size - 1)
    if float(r0) == o_g:
        return None

    minimize = kind.endswith("+")
    if kind.startswith("ca"):
        adv = _pgd_distance(
            model, inputs[target][None, :], emb[q][None, :], cfg, minimize
        )
        emb_adv = model.forward(adv)[0]
        g_emb = emb[others].copy()
        g_emb[np.flatnonzero(others == target)[0]] = emb_adv
        r1 = rank_of(emb[q], g_emb, int(np.flatnonzero(others == target)[0]))
    elif kind.startswith("qa"):
        adv = _pgd_distance(
            model, inputs[q][None, :], emb[target][None, :], cfg, minimize
        )
        emb_q = model.forward(adv)[0]
        r1 = rank_of(emb_q, emb[others], int(np.flatnonzero(others == target)[0]))
    else:
        raise ConfigError(f"unknown ranking attack kind {kind!r}")

    return AttackTrial(
        kind=kind,
        query=q,
        target=target,
        o_i=float(r0),
        o_r=float(r1),
        o_g=o_g,
        ars_general=ars_general(r0, r1, o_g),
        ars_general_raw=ars_general(r0, r1, o_g, clamp=False),
        ars_paper=ars_ranking_paper(r0, r1),
        ars_paper_raw=ars_ranking_paper(r0, r1, clamp=False),
    )


def attack_recall(model, inputs, labels, rng, cfg, trials=None):
    """Recall attack: perturb queries to push them away from their nearest
    same-label gallery sample, then re-measure R@1 on the attacked queries."""
    labels = np.asarray(labels)
    n = len(inputs)
    idx = np.arange(n)
    if trials is not None and trials < n:
        idx = np.sort(rng.choice(n, size=trials, replace=False))
    emb = model.forward(inputs)

    mu = _subset_recall(emb, emb, labels, idx)
    if mu == 0:
        raise DegenerateBatchError("benign R@1 is 0; recall attack is degenerate")

    adv_inputs = inputs.copy()
    for i in idx:
        clean = inputs[i][None, :].copy()
        cur = clean.copy()
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        same = np.flatnonzero(mask & (labels == labels[i]))
        best = cur.copy()
        best_d = -1.0
        for _ in range(cfg.max_steps):
            emb_i = model.forward(cur)[0]
            # re-pick the nearest same-label sample each step
            d_same = np.linalg.norm(emb[same] - emb_i, axis=1)
            if float(d_same.min()) > best_d:
                best_d = float(d_same.min())
                best = cur.copy()
            nearest = same[np.argmin(d_same)]
            cur = _pgd_one_step(model, cur, clean, emb[nearest], cfg)
        emb_i = model.forward(cur)[0]
        d_same = np.linalg.norm(emb[same] - emb_i, axis=1)
        if float(d_same.min()) > best_d:
            best = cur
        adv_inputs[i] = best[0]

    adv_emb = model.forward(adv_inputs)
    mu_tilde = _subset_recall(adv_emb, emb, labels, idx)
    ars = ars_general(mu, mu_tilde, 0.0)
    return AttackTrial(
        kind="recall",
        query=-1,
        target=-1,
        o_i=mu,
        o_r=mu_tilde,
        o_g=0.0,
        ars_general=ars,
        ars_general_raw=ars_general(mu, mu_tilde, 0.0, clamp=False),
        ars_paper=min(max(ars_recall_paper(mu, mu_tilde), 0.0), 100.0),
        ars_paper_raw=ars_recall_paper(mu, mu_tilde),
    )


def _pgd_one_step(model, cur, clean, target_emb, cfg):
    emb = model.forward(cur)
    diff = emb - target_emb[None, :]
    d = np.linalg.norm(diff, axis=1, keepdims=True)
    g_emb = -diff / np.maximum(d, 1e-300)  # ascent on distance
    grads = model.backward(cur, g_emb).input_grads
    cur = cur - cfg.alpha * np.sign(grads)
    delta = np.clip(cur - clean, -cfg.epsilon, cfg.epsilon)
    return np.clip(clean + delta, 0.0, 1.0)


def _subset_recall(query_emb, gallery_emb, labels, idx):
    hits = 0
    for i in idx:
        mask = np.ones(len(gallery_emb), dtype=bool)
        mask[i] = False
        order = gallery_ranking(query_emb[i], gallery_emb[mask])
        hits += bool(labels[mask][order[0]] == labels[i])
    return 100.0 * hits / len(idx)


def run_attack_suite(model, inputs, labels, kinds, trials, cfg, seed):
    """Run `trials` seeded trials of each attack kind; returns the report dict."""
    rng = make_rng((seed, 0xA77AC))
    per_kind = {}
    records = []
    for kind in kinds:
        if kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {kind!r}")
        scores = []
        if kind == "recall":
            trial = attack_recall(model, inputs, labels, rng, cfg, trials=trials)
            records.append(trial)
            scores.append(trial.ars_general)
        else:
            done = 0
            while done < trials:
                trial = attack_rank(model, inputs, labels, kind, rng, cfg)
                if trial is None:
                    continue  # degenerate draw, redraw
                records.append(trial)
                scores.append(trial.ars_general)
                done += 1
        per_kind[kind] = float(np.mean(scores))
    return {
        "format_version": ATTACK_REPORT_FORMAT_VERSION,
        "seed": seed,
        "trials": trials,
        "epsilon": cfg.epsilon,
        "alpha": cfg.alpha,
        "max_steps": cfg.max_steps,
        "per_attack_ars": per_kind,
        "overall_ars": overall_ars(per_kind.values()),
        "trial_records": [asdict(t) for t in records],
    }


def save_attack_report(report, json_path, csv_path=None):
    with open(json_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            kinds = sorted(report["per_attack_ars"])
            writer.writerow(kinds + ["overall_ars"])
            writer.writerow(
                [f"{report['per_attack_ars'][k]:.4f}" for k in kinds]
                + [f"{report['overall_ars']:.4f}"]
            )
