"""Closed-form embedding-shift analysis for the three perturbation methods,
plus a numeric placement oracle that validates the closed forms.

The geometry is planar: an anchor a with a positive p and a negative n, the
angle between the a->n and a->p directions called theta. For a desired
hardness change, the closed forms give the per-sample embedding shift each
perturbation method needs; the oracle solves the same problem numerically
by moving points along the shared shift axis and bisecting on the shift
magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError

METHODS = ("anp", "cap", "sip")


@dataclass
class TripletGeometry:
    theta: float          # angle between a->n and a->p, in (0, pi]
    hardness_change: float
    method: str = "anp"

    def __post_init__(self):
        if not (0.0 < self.theta <= np.pi):
            raise ConfigError("theta must lie in (0, pi]")
        if self.hardness_change <= 0:
            raise ConfigError("hardness change must be > 0")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")


def gamma_theta(theta):
    """Fraction of a unit anchor shift that converts into hardness change."""
    if not (0.0 <= theta <= np.pi):
        raise ConfigError("theta must lie in [0, pi]")
    return 2.0 * np.cos((np.pi - theta) / 2.0)


def closed_form_shift(g: TripletGeometry):
    """Per-sample shift each method needs for the requested hardness change."""
    gam = gamma_theta(g.theta)
    if gam <= 0.0:
        raise NumericError("theta = 0: no shift can change hardness")
    if g.method in ("anp", "cap"):
        return g.hardness_change / gam
    return g.hardness_change / (2.0 * gam)  # sip


def shift_ratio(theta_1, theta_2):
    """Magnitude ratio of the decoupled methods over simultaneous perturbation."""
    denom = np.cos((np.pi - theta_2) / 2.0)
    if denom == 0.0:
        raise NumericError("theta_2 = 0 makes the ratio singular")
    return 2.0 * np.cos((np.pi - theta_1) / 2.0) / denom


def _place(theta):
    """Anchor at origin, p and n at unit radius with angle theta between them."""
    a = np.zeros(2)
    u_p = np.array([np.cos(theta / 2.0), np.sin(theta / 2.0)])
    u_n = np.array([np.cos(theta / 2.0), -np.sin(theta / 2.0)])
    return a, a + u_p, a + u_n, u_p, u_n


def _hardness(a, p, n):
    return np.linalg.norm(a - p) - np.linalg.norm(a - n)


def _shifted(g, a, p, n, axis, delta):
    move = axis * delta
    if g.method == "anp":
        return a + move, p, n
    if g.method == "cap":
        return a, p - move, n - move
    return a + move, p - move, n - move  # sip


def numeric_shift_oracle(g: TripletGeometry, tolerance=1e-12, max_iter=200):
    """Shift magnitude that realizes the requested hardness change, by bisection.

    All moved points travel along the shared axis (the anchor's hardness
    gradient), with identical magnitudes, matching the idealization behind
    the closed forms. Agrees with closed_form_shift to first order for small
    hardness changes.
    """
    a, p, n, u_p, u_n = _place(g.theta)
    grad_a = u_n - u_p  # direction increasing d(a,p) and decreasing d(a,n)
    norm = np.linalg.norm(grad_a)
    if norm < 1e-12:
        raise NumericError("theta = 0: hardness gradient vanishes, shift unbounded")
    axis = grad_a / norm

    target = g.hardness_change

    def change(delta):
        return _hardness(*_shifted(g, a, p, n, axis, delta)) - _hardness(a, p, n)

    lo, hi = 0.0, closed_form_shift(g)
    grow = 0
    while change(hi) < target:
        hi *= 2.0
        grow += 1
        if grow > 60:
            raise NumericError("bisection bracket did not capture the target change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if change(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tolerance:
            break
    else:
        raise NumericError("bisection did not converge")
    return 0.5 * (lo + hi)


def shift_grid(thetas, hardness_change=1e-4):
    """Rows (theta, method, closed_form, measured, rel_error) over a theta grid."""
    rows = []
    for theta in thetas:
        for method in METHODS:
            g = TripletGeometry(theta=theta, hardness_change=hardness_change, method=method)
            cf = float(closed_form_shift(g))
            measured = float(numeric_shift_oracle(g))
            rows.append(
                {
                    "theta": float(theta),
                    "method": method,
                    "closed_form": cf,
                    "measured": measured,
                    "rel_error": abs(measured - cf) / cf,
                }
            )
    return rows
