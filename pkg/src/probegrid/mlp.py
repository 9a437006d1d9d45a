"""The decoder network: a small fully-connected MLP with explicit passes.

ReLU hidden layers, linear output.  Weights are (fan_in, fan_out) so the
forward pass is x @ W + b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    weight_grads: list[np.ndarray] = field(default=None)
    bias_grads: list[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.weight_grads is None:
            self.weight_grads = [np.zeros_like(w) for w in self.weights]
        if self.bias_grads is None:
            self.bias_grads = [np.zeros_like(b) for b in self.biases]

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def zero_grads(self) -> None:
        for g in self.weight_grads:
            g[:] = 0
        for g in self.bias_grads:
            g[:] = 0


def mlp_init(rng, widths, dtype=np.float32) -> MlpParams:
    """He-uniform weights (limit sqrt(6/fan_in)), zero biases."""
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ShapeMismatch(f"invalid layer widths {widths}")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(weights=weights, biases=biases)


def mlp_forward(params: MlpParams, x: np.ndarray):
    """Batched forward pass; returns (output, cache for the backward pass)."""
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ShapeMismatch(
            f"input shape {x.shape} does not match first layer "
            f"({params.weights[0].shape[0]} inputs)")
    activations = [x]
    pre = []
    a = x
    last = len(params.weights) - 1
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0) if li < last else z
        activations.append(a)
    return a, (activations, pre)


def mlp_backward(params: MlpParams, cache, upstream: np.ndarray):
    """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
    activations, pre = cache
    if upstream.shape != activations[-1].shape:
        raise ShapeMismatch(
            f"upstream shape {upstream.shape} != output shape {activations[-1].shape}")
    delta = upstream
    for li in range(len(params.weights) - 1, -1, -1):
        params.weight_grads[li] += activations[li].T @ delta
        params.bias_grads[li] += delta.sum(axis=0)
        if li > 0:
            delta = (delta @ params.weights[li].T) * (pre[li - 1] > 0)
    return delta @ params.weights[0].T
