"""ε-prediction oracles: closed-form Gaussian/mixture scores and a
trainable micro-network, all behind one interface.

Every oracle answers eps(sched, x, t, cond) with an array shaped like x.
The score relation ties ε to the marginal density: ε = −σ_t ∇log q_t(x).
For rectified flow the same oracles provide a velocity prediction
v ≈ E[dX_t/dt | x_t] = E[X_T − X_0 | x_t].
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, NumericsError
from .nn import Adam, MicroNet, time_features
from .schedule import NoiseSchedule


class GaussianOracle:
    """Exact ε for Gaussian data N(μ, s² I).

    The marginal at time t is N(α_t μ, (α_t² s² + σ_t²) I), so
    ε(x, t) = σ_t (x − α_t μ) / (α_t² s² + σ_t²).
    """

    def __init__(self, mean, scale: float = 1.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.scale = float(scale)
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {scale}")

    @property
    def dim(self) -> int:
        return self.mean.size

    def eps(self, sched: NoiseSchedule, x, t, cond=None):
        x = np.asarray(x, dtype=float)
        alpha, sigma = sched.alpha_sigma(t)
        var = alpha**2 * self.scale**2 + sigma**2
        return sigma * (x - alpha * self.mean) / var

    def velocity(self, sched: NoiseSchedule, x, t, cond=None):
        """Rectified-flow velocity E[dX_t/dt | x_t] = E[X_T − X_0 | x_t],
        finite for all t ∈ [0, 1]."""
        if sched.kind != "RectFlow":
            raise ConfigError("velocity is defined for RectFlow schedules")
        x = np.asarray(x, dtype=float)
        alpha, sigma = sched.alpha_sigma(t)
        var = alpha**2 * self.scale**2 + sigma**2
        return (sigma - alpha * self.scale**2) * (x - alpha * self.mean) / var \
            - self.mean


class MixtureOracle:
    """Exact ε for an isotropic Gaussian mixture Σ w_i N(μ_i, s_i² I)."""

    def __init__(self, weights, means, scales):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.scales = np.asarray(scales, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ConfigError("mixture weights must sum to 1")
        if np.any(self.scales <= 0):
            raise ConfigError("mixture scales must be positive")
        if not (len(self.weights) == len(self.means) == len(self.scales)):
            raise ConfigError("mixture component counts disagree")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _responsibilities(self, sched, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        alpha, sigma = sched.alpha_sigma(t)
        var = alpha**2 * self.scales**2 + sigma**2          # (K,)
        diff = x[:, None, :] - alpha * self.means[None]     # (n, K, d)
        sq = np.sum(diff**2, axis=-1)                       # (n, K)
        log_w = (
            np.log(self.weights)
            - 0.5 * self.dim * np.log(var)
            - 0.5 * sq / var
        )
        log_r = log_w - logsumexp(log_w, axis=1, keepdims=True)
        return np.exp(log_r), diff, var, sigma

    def eps(self, sched: NoiseSchedule, x, t, cond=None):
        x_arr = np.asarray(x, dtype=float)
        r, diff, var, sigma = self._responsibilities(sched, x, t)
        # −σ ∇log q = σ Σ_i r_i (x − α μ_i)/var_i
        out = sigma * np.sum(r[..., None] * diff / var[None, :, None], axis=1)
        return out.reshape(x_arr.shape)

    def velocity(self, sched: NoiseSchedule, x, t, cond=None):
        if sched.kind != "RectFlow":
            raise ConfigError("velocity is defined for RectFlow schedules")
        x_arr = np.asarray(x, dtype=float)
        alpha, sigma = sched.alpha_sigma(t)
        r, diff, var, _ = self._responsibilities(sched, x, t)
        # Per-component posterior mean of dX/dt = X_T − X_0, mixed by
        # responsibility.
        comp = (sigma - alpha * self.scales**2)[None, :, None] \
            * diff / var[None, :, None] - self.means[None]
        out = np.sum(r[..., None] * comp, axis=1)
        return out.reshape(x_arr.shape)


class NetOracle:
    """Trainable ε_θ backed by a MicroNet.

    Input features are [x, cond?, time embedding]; conditioning enters by
    concatenation. The prediction is an analytic Gaussian-prior ε plus
    the network output: the prior handles the heavily amplified
    high-noise regime exactly, the network learns the correction. With
    base_scale=None the prior is disabled and the network output is the
    whole prediction.
    """

    def __init__(self, dim: int, cond_dim: int = 0, hidden=(64, 64),
                 seed: int = 0, base_mean=0.0, base_scale: float | None = None):
        self.dim = int(dim)
        self.cond_dim = int(cond_dim)
        in_dim = self.dim + self.cond_dim + 2 * 8
        self.net = MicroNet([in_dim, *hidden, self.dim], seed=seed)
        if base_scale is not None:
            self.base = GaussianOracle(
                np.broadcast_to(np.asarray(base_mean, dtype=float),
                                (self.dim,)),
                base_scale,
            )
        else:
            self.base = None

    def base_coeff(self, sched: NoiseSchedule, t) -> float:
        """d ε_base/dx, the scalar Jacobian of the analytic prior term."""
        if self.base is None:
            return 0.0
        alpha, sigma = sched.alpha_sigma(t)
        return float(sigma / (alpha**2 * self.base.scale**2 + sigma**2))

    def _features(self, x, t, cond):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ConfigError(f"state dimension {x.shape[1]} != {self.dim}")
        parts = [x]
        if self.cond_dim:
            if cond is None:
                raise ConfigError("this oracle requires a conditioning vector")
            cond = np.atleast_2d(np.asarray(cond, dtype=float))
            if cond.shape[1] != self.cond_dim:
                raise ConfigError(
                    f"conditioning dimension {cond.shape[1]} != {self.cond_dim}"
                )
            parts.append(np.broadcast_to(cond, (x.shape[0], self.cond_dim)))
        tf = time_features(t)
        if tf.shape[0] == 1:
            tf = np.broadcast_to(tf, (x.shape[0], tf.shape[1]))
        parts.append(tf)
        return np.concatenate(parts, axis=1)

    def _base_eps(self, sched, x, t):
        if self.base is None:
            return 0.0
        return self.base.eps(sched, np.atleast_2d(np.asarray(x, dtype=float)),
                             t)

    def eps(self, sched: NoiseSchedule, x, t, cond=None):
        x_arr = np.asarray(x, dtype=float)
        out = self.net.forward(self._features(x, t, cond))
        out = out + self._base_eps(sched, x, t)
        return out.reshape(x_arr.shape)

    def eps_with_tape(self, sched: NoiseSchedule, x, t, cond=None):
        """Training-mode evaluation returning (ε̂, tape) for backprop.

        The tape covers only the network part; callers doing state
        backprop must add base_coeff(sched, t) to the Jacobian.
        """
        out, tape = self.net.forward(self._features(x, t, cond), train=True)
        return out + self._base_eps(sched, x, t), tape

    def backprop(self, tape, upstream):
        """Gradients (dL/dθ, dL/dx) for upstream cotangents on ε̂."""
        grad_theta, grad_feat = self.net.backward(tape, upstream)
        return grad_theta, grad_feat[:, :self.dim]

    def clone(self) -> "NetOracle":
        other = NetOracle.__new__(NetOracle)
        other.dim = self.dim
        other.cond_dim = self.cond_dim
        other.net = MicroNet(self.net.widths)
        other.net.set_theta(self.net.theta)
        other.base = None if self.base is None else GaussianOracle(
            self.base.mean, self.base.scale)
        return other


def net_forward(net: MicroNet, x, t, cond=None, train: bool = False):
    """Raw MicroNet evaluation on [x, cond?, time features]."""
    oracle = NetOracle.__new__(NetOracle)
    oracle.dim = np.atleast_2d(x).shape[1]
    oracle.cond_dim = 0 if cond is None else np.atleast_2d(cond).shape[1]
    oracle.net = net
    oracle.base = None
    feats = oracle._features(x, t, cond)
    return net.forward(feats, train=train)


def net_backward(tape, upstream):
    """Reverse-mode gradients (grad_theta, grad_x) for a recorded forward."""
    return tape.net.backward(tape, upstream)


def train_denoiser(oracle: NetOracle, dataset, sched: NoiseSchedule,
                   steps: int, lr: float = 1e-3, batch_size: int = 64,
                   seed: int = 0):
    """DDPM training: minimize E‖ε − ε_θ(α_t x* + σ_t ε, t, y)‖².

    dataset supplies arrays x_star (n, d) and y (n, d). Returns the loss
    history; the oracle is updated in place.
    """
    x_star = np.asarray(dataset.x_star, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    n = x_star.shape[0]
    rng = np.random.default_rng(seed)
    opt = Adam(oracle.net.n_params, lr=lr)
    losses = []
    for _ in range(int(steps)):
        idx = rng.integers(0, n, size=batch_size)
        t = rng.uniform(sched.t_min, sched.t_max)
        eps = rng.standard_normal((batch_size, oracle.dim))
        alpha, sigma = sched.alpha_sigma(t)
        x_t = alpha * x_star[idx] + sigma * eps
        cond = y[idx] if oracle.cond_dim else None
        pred, tape = oracle.eps_with_tape(sched, x_t, t, cond)
        resid = pred - eps
        loss = float(np.mean(resid**2))
        if not np.isfinite(loss):
            raise NumericsError(f"non-finite training loss at step {len(losses)}")
        grad_theta, _ = oracle.backprop(tape, 2.0 * resid / resid.size)
        oracle.net.set_theta(opt.step(oracle.net.theta, grad_theta))
        losses.append(loss)
    return losses
