"""Small feed-forward embedding network with exact analytic gradients.

The network is a stack of affine layers with ReLU on the hidden layers and
an L2 normalization (with a small floor to avoid division by zero) on the
output, so embeddings live on the unit sphere whenever the pre-normalization
norm is non-degenerate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError

NORM_FLOOR = 1e-12

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class GradientBundle:
    """Gradients of a scalar loss w.r.t. model parameters and inputs."""

    weight_grads: list  # one (out, in) array per layer
    bias_grads: list    # one (out,) array per layer
    input_grads: np.ndarray  # (B, D)


@dataclass
class EmbeddingModel:
    layer_dims: list
    weights: list = field(default_factory=list)   # (out, in) per layer
    biases: list = field(default_factory=list)    # (out,) per layer

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ShapeError("need at least input and output dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            d_in, d_out = self.layer_dims[i], self.layer_dims[i + 1]
            if w.shape != (d_out, d_in) or b.shape != (d_out,):
                raise ShapeError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} inconsistent "
                    f"with dims {d_in}->{d_out}"
                )

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    @classmethod
    def initialize(cls, layer_dims, seed):
        """Seeded uniform init in +/- sqrt(6 / (fan_in + fan_out))."""
        rng = np.random.Generator(np.random.PCG64(seed))
        weights, biases = [], []
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = np.sqrt(6.0 / (d_in + d_out))
            weights.append(rng.uniform(-bound, bound, size=(d_out, d_in)))
            biases.append(np.zeros(d_out))
        return cls(list(layer_dims), weights, biases)

    def _check_inputs(self, inputs):
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.input_dim:
            raise ShapeError(
                f"expected inputs of shape (B, {self.input_dim}), got {inputs.shape}"
            )
        return inputs

    def forward(self, inputs):
        """Embed a (B, D) batch into unit (B, N) vectors."""
        out, _ = self.forward_with_cache(inputs)
        return out

    def forward_with_cache(self, inputs):
        x = self._check_inputs(inputs)
        activations = [x]
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w.T + b
            if i < n_layers - 1:
                z = np.maximum(z, 0.0)  # subgradient at 0 taken as 0
            activations.append(z)
        pre = activations[-1]
        norms = np.linalg.norm(pre, axis=1, keepdims=True)
        safe = np.maximum(norms, NORM_FLOOR)
        out = pre / safe
        return out, (activations, norms, safe, out)

    def backward(self, inputs, upstream_grads):
        """Exact gradients of sum(upstream * output) w.r.t. params and inputs.

        `upstream_grads` must have the shape of `forward(inputs)`.
        """
        x = self._check_inputs(inputs)
        g = np.asarray(upstream_grads, dtype=np.float64)
        _, (activations, norms, safe, out) = self.forward_with_cache(x)
        if g.shape != out.shape:
            raise ShapeError(f"upstream grads {g.shape} do not match output {out.shape}")

        # Through y = z / max(||z||, floor): where the floor is inactive the
        # gradient is (g - (g.y) y) / ||z||; where it is active, just g / floor.
        floored = norms < NORM_FLOOR
        proj = (g - np.sum(g * out, axis=1, keepdims=True) * out) / safe
        delta = np.where(floored, g / safe, proj)

        weight_grads = [None] * len(self.weights)
        bias_grads = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = activations[i]
            if i < len(self.weights) - 1:
                delta = delta * (activations[i + 1] > 0.0)
            weight_grads[i] = delta.T @ a_in
            bias_grads[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i]
        return GradientBundle(weight_grads, bias_grads, delta)

    # -- checkpoint I/O ------------------------------------------------------

    def to_checkpoint(self, seed=None):
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "layer_dims": [int(d) for d in self.layer_dims],
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "seed": seed,
        }

    def save(self, path, seed=None):
        with open(path, "w") as fh:
            json.dump(self.to_checkpoint(seed=seed), fh)
            fh.write("\n")

    @classmethod
    def from_checkpoint(cls, payload):
        try:
            dims = payload["layer_dims"]
            weights = [np.asarray(w, dtype=np.float64) for w in payload["weights"]]
            biases = [np.asarray(b, dtype=np.float64) for b in payload["biases"]]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed checkpoint: {exc}") from exc
        return cls(list(dims), weights, biases)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_checkpoint(json.load(fh))
