"""Minimal dense network with in-repo reverse-mode gradients.

MicroNet is a tanh MLP whose parameters live in one flat float64 vector,
so optimizers and checkpoints can treat the model as a single array.
Forward passes in training mode record a GradientTape; net_backward
replays it to produce exact dLoss/dθ and dLoss/dx.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

N_TIME_FREQS = 8


def time_features(t, n_freqs: int = N_TIME_FREQS) -> np.ndarray:
    """Sinusoidal embedding (sin ω_j t, cos ω_j t), ω_j = π·2^j.

    Accepts a scalar or a batch of times; returns shape (..., 2·n_freqs).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    omegas = np.pi * 2.0 ** np.arange(n_freqs)
    phase = t[..., None] * omegas
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


class GradientTape:
    """Recorded activations of one forward pass, enough for backprop."""

    def __init__(self, net: "MicroNet", inputs: list[np.ndarray]):
        self.net = net
        self.inputs = inputs
        self.version = net.version

    def _check(self):
        if self.version != self.net.version:
            raise ConfigError(
                "stale GradientTape: weights changed since the forward pass"
            )


class MicroNet:
    """Fully connected tanh network over a flat parameter vector.

    widths[0] is the input dimension, widths[-1] the output dimension;
    every intermediate layer applies tanh, the final layer is linear.
    """

    def __init__(self, widths, seed: int | None = None):
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ConfigError(f"bad layer widths {self.widths}")
        self._shapes = []
        for n_in, n_out in zip(self.widths[:-1], self.widths[1:]):
            self._shapes.append(((n_in, n_out), (n_out,)))
        self.n_params = int(sum(np.prod(w) + np.prod(b) for w, b in self._shapes))
        self.theta = np.zeros(self.n_params, dtype=np.float64)
        self.version = 0
        if seed is not None:
            self.init_weights(seed)

    # -- parameter views ----------------------------------------------------

    def _layers(self, theta=None):
        """Views (W, b) per layer into the flat parameter vector."""
        theta = self.theta if theta is None else theta
        out = []
        pos = 0
        for w_shape, b_shape in self._shapes:
            n_w = int(np.prod(w_shape))
            w = theta[pos:pos + n_w].reshape(w_shape)
            pos += n_w
            b = theta[pos:pos + b_shape[0]]
            pos += b_shape[0]
            out.append((w, b))
        return out

    def init_weights(self, seed: int):
        """Scaled-normal init; the final layer starts at zero so a fresh
        net predicts zeros."""
        rng = np.random.default_rng(seed)
        theta = np.empty(self.n_params, dtype=np.float64)
        layers = self._layers(theta)
        for i, (w, b) in enumerate(layers):
            if i == len(layers) - 1:
                w[...] = 0.0
            else:
                w[...] = rng.standard_normal(w.shape) / np.sqrt(w.shape[0])
            b[...] = 0.0
        self.set_theta(theta)

    def set_theta(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ConfigError(
                f"parameter vector must have shape ({self.n_params},), "
                f"got {theta.shape}"
            )
        self.theta = theta.copy()
        self.version += 1

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False):
        """Evaluate the net on a batch x of shape (n, widths[0]).

        Returns the output (n, widths[-1]); with train=True also returns
        the GradientTape for net_backward.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.widths[0]:
            raise ConfigError(
                f"input dimension {x.shape[1]} != expected {self.widths[0]}"
            )
        inputs = [x]
        h = x
        layers = self._layers()
        for i, (w, b) in enumerate(layers):
            z = h @ w + b
            h = z if i == len(layers) - 1 else np.tanh(z)
            if i < len(layers) - 1:
                inputs.append(h)
        if train:
            return h, GradientTape(self, inputs)
        return h

    def backward(self, tape: GradientTape, upstream: np.ndarray):
        """Reverse-mode gradients of sum(upstream · output).

        Returns (grad_theta, grad_x) with grad_theta flat like theta and
        grad_x matching the forward input batch.
        """
        tape._check()
        upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        grad_theta = np.zeros_like(self.theta)
        g_layers = self._layers(grad_theta)
        layers = self._layers()
        delta = upstream
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            g_w, g_b = g_layers[i]
            h_in = tape.inputs[i]
            g_w += h_in.T @ delta
            g_b += delta.sum(axis=0)
            delta = delta @ w.T
            if i > 0:
                # tanh'(z) = 1 − tanh(z)²; tape.inputs[i] stores tanh(z).
                delta = delta * (1.0 - tape.inputs[i] ** 2)
        return grad_theta, delta


class Adam:
    """Standard Adam update rule over a flat parameter vector."""

    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params, dtype=np.float64)
        self.v = np.zeros(n_params, dtype=np.float64)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return the updated parameter vector (input is not mutated)."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
