"""Adversarial and training losses with exact gradients in embedding space.

Every function here returns the loss value together with its gradients with
respect to the three embedding groups (anchors, positives, negatives). The
anchor-proximity weights and the top-rank memberships are recomputed from
the current embeddings but treated as constants for gradient purposes: the
min and the ranking are non-differentiable, so they are frozen per
evaluation, and the matching `*_frozen` value functions let an independent
finite-difference check use exactly the same freeze.
"""

from __future__ import annotations

import numpy as np

from .errors import StateError
from .metrics import aligned_distances, proximity_weights

_TINY = 1e-300  # guards 0/0 in unit-difference vectors; d=0 rows get zero grad


def _unit_diffs(X, Y):
    diff = X - Y
    d = np.linalg.norm(diff, axis=1)
    u = diff / np.maximum(d, _TINY)[:, None]
    return d, u


def mean_distance_grads(X, Y, weights=None):
    """Value and grads of sum(w_i ||x_i-y_i||) / sum(w_i), weights frozen.

    Uniform weights give the plain batch mean distance.
    """
    d, u = _unit_diffs(X, Y)
    if weights is None:
        coef = np.full(len(d), 1.0 / len(d))
        value = float(np.sum(d) / len(d))
    else:
        total = float(np.sum(weights))
        coef = weights / total
        value = float(np.sum(weights * d) / total)
    gX = coef[:, None] * u
    return value, gX, -gX


def triplet_loss_grad(emb_a, emb_p, emb_n, margin, hinge=True):
    """Triplet loss and gradients w.r.t. all three embedding groups."""
    dp, gp_a, gp_p = mean_distance_grads(emb_a, emb_p)
    dn, gn_a, gn_n = mean_distance_grads(emb_a, emb_n)
    raw = dp - dn + margin
    if hinge and raw <= 0.0:
        z = np.zeros_like(emb_a)
        return 0.0, z, np.zeros_like(emb_p), np.zeros_like(emb_n)
    return raw, gp_a - gn_a, gp_p, -gn_n


def hardness_grad(emb_a, emb_p, emb_n):
    dp, gp_a, gp_p = mean_distance_grads(emb_a, emb_p)
    dn, gn_a, gn_n = mean_distance_grads(emb_a, emb_n)
    return dp - dn, gp_a - gn_a, gp_p, -gn_n


def frozen_weights(emb_a, emb_p, emb_n, attention):
    """Eq.-style anchor-proximity weights at the current embeddings."""
    wp = proximity_weights(aligned_distances(emb_a, emb_p), attention)
    wn = proximity_weights(aligned_distances(emb_a, emb_n), attention)
    return wp, wn


def collapseness_frozen(emb_a, emb_p, emb_n, wp, wn):
    dp = aligned_distances(emb_a, emb_p)
    dn = aligned_distances(emb_a, emb_n)
    return float(np.sum(wp * dp) / np.sum(wp) - np.sum(wn * dn) / np.sum(wn))


def collapseness_grad(emb_a, emb_p, emb_n, wp, wn):
    dp_val, gp_a, gp_p = mean_distance_grads(emb_a, emb_p, wp)
    dn_val, gn_a, gn_n = mean_distance_grads(emb_a, emb_n, wn)
    return dp_val - dn_val, gp_a - gn_a, gp_p, -gn_n


def cap_loss_frozen(emb_a, emb_p, emb_n, wp, wn, clip=True):
    c = collapseness_frozen(emb_a, emb_p, emb_n, wp, wn)
    return max(-c, 0.0) if clip else -c


def cap_loss_grad(emb_a, emb_p, emb_n, attention, clip=True):
    """max(-C, 0) (or raw -C) and its gradients, weights frozen."""
    wp, wn = frozen_weights(emb_a, emb_p, emb_n, attention)
    c, ga, gp, gn = collapseness_grad(emb_a, emb_p, emb_n, wp, wn)
    if clip and -c <= 0.0:
        z = np.zeros_like(emb_a)
        return 0.0, z, np.zeros_like(emb_p), np.zeros_like(emb_n)
    return (max(-c, 0.0) if clip else -c), -ga, -gp, -gn


def top_rank_split(emb_a, emb_p, emb_n):
    """Indices of the ceil(B/2) positives and negatives closest to their anchors.

    Ties break stably by ascending index.
    """
    b = len(emb_a)
    half = (b + 1) // 2
    dp = aligned_distances(emb_a, emb_p)
    dn = aligned_distances(emb_a, emb_n)
    pv = np.argsort(dp, kind="stable")[:half]
    nv = np.argsort(dn, kind="stable")[:half]
    return pv, nv


def delta_tr_frozen(emb_a, emb_n, emb_a0, wp, wn, nv_idx, emb_p):
    c = collapseness_frozen(emb_a, emb_p, emb_n, wp, wn)
    d_nv = float(np.mean(aligned_distances(emb_a[nv_idx], emb_n[nv_idx])))
    d_a0 = float(np.mean(aligned_distances(emb_a, emb_a0)))
    return float(np.exp(max(c, 0.0)) * (d_nv - d_a0))


def delta_tr(emb_a, emb_p, emb_n, emb_a0, attention):
    """exp(max(C,0)) * (d(A, N_top) - d(A, A0))."""
    if emb_a0 is None:
        raise StateError("original anchor embeddings required for the top-rank term")
    wp, wn = frozen_weights(emb_a, emb_p, emb_n, attention)
    _, nv = top_rank_split(emb_a, emb_p, emb_n)
    return delta_tr_frozen(emb_a, emb_n, emb_a0, wp, wn, nv, emb_p)


def anp_loss_frozen(emb_a, emb_p, emb_n, emb_a0, wp, wn, nv_idx, clip=True):
    c = collapseness_frozen(emb_a, emb_p, emb_n, wp, wn)
    dtr = delta_tr_frozen(emb_a, emb_n, emb_a0, wp, wn, nv_idx, emb_p)
    raw = -c + dtr
    return max(raw, 0.0) if clip else raw


def anp_loss_grad(emb_a, emb_p, emb_n, emb_a0, attention, clip=True):
    """max(-C + Delta_TR, 0) (or raw) and gradients, weights/ranking frozen."""
    if emb_a0 is None:
        raise StateError("original anchor embeddings required for the top-rank term")
    wp, wn = frozen_weights(emb_a, emb_p, emb_n, attention)
    _, nv = top_rank_split(emb_a, emb_p, emb_n)

    c, gc_a, gc_p, gc_n = collapseness_grad(emb_a, emb_p, emb_n, wp, wn)

    b = len(emb_a)
    d_nv, u_nv = _unit_diffs(emb_a[nv], emb_n[nv])
    d_a0, u_a0 = _unit_diffs(emb_a, emb_a0)
    gap = float(np.mean(d_nv) - np.mean(d_a0))
    factor = float(np.exp(max(c, 0.0)))

    # d(Delta_TR) = factor * ([C>0] dC * gap + d(gap))
    gd_a = -u_a0 / b
    gd_n = np.zeros_like(emb_n)
    gd_a_nv = u_nv / len(nv)
    ga = gd_a.copy()
    ga[nv] += gd_a_nv
    gd_n[nv] -= gd_a_nv
    gp = np.zeros_like(emb_p)
    if c > 0.0:
        ga = ga + gc_a * gap
        gp = gp + gc_p * gap
        gd_n = gd_n + gc_n * gap
    dtr = factor * gap
    gtr_a, gtr_p, gtr_n = factor * ga, factor * gp, factor * gd_n

    raw = -c + dtr
    if clip and raw <= 0.0:
        z = np.zeros_like(emb_a)
        return 0.0, z, np.zeros_like(emb_p), np.zeros_like(emb_n)
    value = max(raw, 0.0) if clip else raw
    return value, -gc_a + gtr_a, -gc_p + gtr_p, -gc_n + gtr_n


def hm_loss_frozen(emb_a, emb_p, emb_n, h_destination):
    dp = float(np.mean(aligned_distances(emb_a, emb_p)))
    dn = float(np.mean(aligned_distances(emb_a, emb_n)))
    return (h_destination - (dp - dn)) ** 2


def hm_loss_grad(emb_a, emb_p, emb_n, h_destination):
    """(H_D - H)^2 and gradients; the hardness-manipulation surrogate."""
    h, ga, gp, gn = hardness_grad(emb_a, emb_p, emb_n)
    scale = -2.0 * (h_destination - h)
    return (h_destination - h) ** 2, scale * ga, scale * gp, scale * gn


def top_rank_triplet_grad(emb_a, emb_p, emb_n, gamma, margin, hinge=True):
    """gamma * (d(A,P_top) - d(A,N_top) + margin), memberships frozen."""
    pv, nv = top_rank_split(emb_a, emb_p, emb_n)
    d_pv, u_pv = _unit_diffs(emb_a[pv], emb_p[pv])
    d_nv, u_nv = _unit_diffs(emb_a[nv], emb_n[nv])
    raw = float(np.mean(d_pv) - np.mean(d_nv) + margin)
    if hinge and raw <= 0.0:
        z = np.zeros_like(emb_a)
        return 0.0, z, np.zeros_like(emb_p), np.zeros_like(emb_n)
    ga = np.zeros_like(emb_a)
    gp = np.zeros_like(emb_p)
    gn = np.zeros_like(emb_n)
    ga[pv] += u_pv / len(pv)
    gp[pv] -= u_pv / len(pv)
    ga[nv] -= u_nv / len(nv)
    gn[nv] += u_nv / len(nv)
    return gamma * raw, gamma * ga, gamma * gp, gamma * gn
