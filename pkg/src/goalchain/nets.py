"""Small fully connected networks with hand-rolled reverse-mode gradients.

Batch-first float64 arrays throughout. Hidden layers use the rectifier,
the output layer is linear. Gradients are exact for the piecewise-linear
network (the rectifier subgradient at 0 is taken as 0).
"""

from __future__ import annotations

import math

import numpy as np


class Mlp:
    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 3e-3):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        self.sizes = [int(s) for s in sizes]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        last = len(self.sizes) - 2
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            # He-uniform on hidden layers; small output layer keeps initial
            # predictions near zero.
            bound = out_scale if k == last else math.sqrt(6.0 / fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
        return h

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping the post-activation inputs of every layer."""
        inputs = [x]
        h = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
                inputs.append(h)
        return h, inputs

    def backward(self, cache, grad_out: np.ndarray):
        """Accumulate parameter gradients and the gradient w.r.t. the input.

        `cache` is the list returned by forward_cached; grad_out is dL/dout
        with the same shape as the forward output. Returns (grads, grad_in)
        where grads matches the layout of `params`.
        """
        inputs = cache
        delta = grad_out
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = inputs[k]
            grads[2 * k] = h_in.T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[k].T
            if k > 0:
                delta = delta * (inputs[k] > 0.0)
        return grads, delta

    def copy_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.params, other.params):
            np.copyto(dst, src)

    def clone(self) -> "Mlp":
        dup = Mlp.__new__(Mlp)
        dup.sizes = list(self.sizes)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """Move target parameters toward the online ones by a convex mix."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    for t, o in zip(target.params, online.params):
        t *= 1.0 - tau
        t += tau * o
