"""Tiny tanh MLPs with hand-written backprop and momentum SGD.

Everything is float64 numpy; parameters live in flat lists of (W, b) pairs
so snapshots and finite-difference checks stay trivial.
"""

from __future__ import annotations

import numpy as np


class MLP:
    """Fully connected tanh network with a linear output layer."""

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for k in range(len(self.sizes) - 1):
            fan_in, fan_out = self.sizes[k], self.sizes[k + 1]
            scale = 1.0 / np.sqrt(fan_in)
            if k == len(self.sizes) - 2:
                scale *= out_scale
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray):
        """Returns (output, cache); x has shape (batch, in_dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        activations = [x]
        h = x
        for k in range(len(self.weights) - 1):
            h = np.tanh(h @ self.weights[k] + self.biases[k])
            activations.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, activations

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of sum(grad_out * output) w.r.t. every parameter."""
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        delta = np.atleast_2d(grad_out)
        for k in range(len(self.weights) - 1, -1, -1):
            grad_w[k] = cache[k].T @ delta
            grad_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (1.0 - cache[k] ** 2)
        return grad_w, grad_b

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def set_params(self, params: list[np.ndarray]) -> None:
        count = len(self.weights)
        for k in range(count):
            np.copyto(self.weights[k], params[k])
            np.copyto(self.biases[k], params[count + k])

    def freeze(self) -> None:
        for p in self.params():
            p.setflags(write=False)

    @property
    def frozen(self) -> bool:
        return all(not p.flags.writeable for p in self.params())


class MomentumSGD:
    """Classic momentum: v <- m*v + g; p <- p - lr*v."""

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float):
        self.params = params
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam:
    """Adam alternative to the paper's momentum-SGD setup (config knob)."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def make_optimizer(kind: str, params, lr: float, momentum: float):
    if kind == "sgd":
        return MomentumSGD(params, lr, momentum)
    if kind == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")
