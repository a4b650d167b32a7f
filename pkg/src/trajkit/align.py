"""Best-of-N trajectory alignment.

One alignment step: run the deterministic ODE to a random switch time τ,
branch N modulated-SDE candidate trajectories from the τ state, score
their endpoints with a reward, and regress the ODE trajectory toward the
winner (plus an anchor toward the ground truth). The noise intensity of
each candidate step comes from a learned modulator γ_ψ(error, t).

Candidates are treated as constant targets (no gradient flows through
their states); γ_ψ is trained separately by regressing toward the γ
values the winning candidate actually used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericsError
from .integrator import MSDE_VP, MSDE_VE, Trajectory, dpm1_step, \
    msde_vp_step, msde_ve_step
from .nn import Adam, MicroNet
from .oracle import NetOracle
from .rng import CounterRng
from .schedule import VE, NoiseSchedule, TimeGrid, make_grid
from .task import DivergenceSpec, RewardSpec, reward

# Stream-id layout inside one run seed: each alignment iteration owns a
# block of ids for its start noise and candidate draws.
_STREAMS_PER_ITER = 1024


class GammaModulator:
    """Learned noise-intensity map γ_ψ(err, t) > 0.

    A small MLP over (reconstruction error, timestamp) with a softplus
    output map; zero weights give softplus(0) = ln 2.
    """

    def __init__(self, hidden=(32, 32), seed: int | None = 0):
        self.net = MicroNet([2, *hidden, 1], seed=seed)

    def gamma(self, err, t):
        """Evaluate γ for scalar or batched (err, t)."""
        raw = self._raw(err, t)
        return _softplus(raw).reshape(np.shape(np.asarray(err)) or ())

    def _raw(self, err, t):
        err = np.atleast_1d(np.asarray(err, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), err.shape)
        if not (np.all(np.isfinite(err)) and np.all(np.isfinite(t))):
            raise ConfigError("gamma_eval requires finite (err, t) inputs")
        if np.any(err < 0):
            raise ConfigError("reconstruction error must be nonnegative")
        return self.net.forward(np.stack([err, t], axis=1))[:, 0]


def _softplus(z):
    return np.logaddexp(0.0, z)


def gamma_eval(mod: GammaModulator, err, t):
    """Strictly positive modulation factor for the given error and time."""
    return mod.gamma(err, t)


@dataclass
class AlignConfig:
    """Hyperparameters of the alignment loop."""

    n_candidates: int = 8
    reward: RewardSpec = field(default_factory=RewardSpec)
    divergence: DivergenceSpec = field(default_factory=DivergenceSpec)
    learning_rate: float = 1e-3
    psi_learning_rate: float = 1e-3
    iterations: int = 500
    steps: int = 10
    anchor_weight: float = 1.0
    tau_sampling: str = "uniform"
    gamma_jitter: float = 0.3

    def __post_init__(self):
        if self.n_candidates < 2:
            raise ConfigError(f"need N >= 2 candidates, got {self.n_candidates}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.tau_sampling != "uniform":
            raise ConfigError(f"unknown tau_sampling {self.tau_sampling!r}")


def _one_jump_error(sched: NoiseSchedule, x, t, eps_hat, x_star) -> float:
    """Running reconstruction-error estimate: distance between a single
    semi-linear jump to t_min and the ground truth."""
    x0_hat = dpm1_step(sched, x, t, sched.t_min, eps_hat)
    return float(np.linalg.norm(x0_hat - x_star))


def _msde_step(sched, x, t, t_prev, eps_hat, gamma, rng, step):
    if sched.kind == VE:
        return msde_ve_step(sched, x, t, t_prev, eps_hat, gamma,
                            rng=rng, step=step)
    return msde_vp_step(sched, x, t, t_prev, eps_hat, gamma,
                        rng=rng, step=step)


def sample_candidates(oracle, sched: NoiseSchedule, mod: GammaModulator,
                      x_tau, tau_index: int, grid: TimeGrid, n: int,
                      rng: CounterRng, x_star, cond=None,
                      gamma_scales=None, gamma_override=None):
    """Draw n modulated-SDE trajectories from the ODE state at τ.

    Each candidate owns an RNG substream. The per-step γ comes from the
    modulator on (running error estimate, t), optionally scaled by a
    per-candidate factor (gamma_scales) or replaced wholesale
    (gamma_override). A diverged candidate is resampled once on a fresh
    substream; a second divergence is an error.
    """
    times = grid.times
    out = []
    for cand in range(n):
        traj = None
        for attempt in range(2):
            try:
                traj = _run_candidate(
                    oracle, sched, mod, x_tau, tau_index, times, x_star,
                    cond, rng.substream(rng.stream + 1 + cand + attempt * n),
                    None if gamma_scales is None else gamma_scales[cand],
                    gamma_override,
                )
                break
            except NumericsError:
                if attempt == 1:
                    raise NumericsError(
                        f"candidate {cand} diverged twice during resampling"
                    )
        out.append(traj)
    return out


def _run_candidate(oracle, sched, mod, x_tau, tau_index, times, x_star,
                   cond, rng, gamma_scale, gamma_override):
    x = np.asarray(x_tau, dtype=float)
    states = [x]
    gammas = []
    for j in range(tau_index, times.size - 1):
        t, t_prev = float(times[j]), float(times[j + 1])
        eps_hat = oracle.eps(sched, x, t, cond)
        if gamma_override is not None:
            gamma = float(np.broadcast_to(gamma_override, (times.size - 1,))[j])
        else:
            err = _one_jump_error(sched, x, t, eps_hat, x_star)
            gamma = float(gamma_eval(mod, err, t))
            if gamma_scale is not None:
                gamma = gamma * float(gamma_scale)
        x = _msde_step(sched, x, t, t_prev, eps_hat, gamma, rng, j)
        if not np.all(np.isfinite(x)):
            raise NumericsError(f"candidate diverged at step {j}")
        states.append(x)
        gammas.append(gamma)
    return Trajectory(
        times=times[tau_index:].copy(), states=np.asarray(states),
        solver=MSDE_VE if sched.kind == VE else MSDE_VP,
        seed=rng.seed, stream=rng.stream, gammas=np.asarray(gammas),
    )


def select_best(cands, reward_fn, x_star) -> int:
    """Index of the highest-reward candidate endpoint; ties break low."""
    if not cands:
        raise ConfigError("select_best needs a nonempty candidate list")
    rewards = np.array([reward_fn(c.endpoint, x_star) for c in cands])
    if not np.any(np.isfinite(rewards)):
        raise NumericsError("all candidate rewards are non-finite")
    rewards = np.where(np.isfinite(rewards), rewards, -np.inf)
    return int(np.argmax(rewards))


@dataclass
class AlignState:
    """Mutable optimizer state threaded through align_step calls."""

    opt_theta: Adam
    opt_psi: Adam
    skip_streak: int = 0


def _divergence_grad(spec: DivergenceSpec, a, b):
    """d D(a, b) / d a for the supported divergences."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if spec.kind == "sq_l2":
        return 2.0 * d
    return np.sign(d)


def align_step(oracle: NetOracle, mod: GammaModulator, x_star, y,
               sched: NoiseSchedule, cfg: AlignConfig, seed: int,
               iteration: int, state: AlignState):
    """One full alignment update on a single (x*, y) pair.

    Returns a metrics dict (loss, reward_best, reward_mean, gamma_mean).
    Oracle and modulator weights are updated in place.
    """
    from .task import divergence as div_fn

    x_star = np.asarray(x_star, dtype=float)
    y = np.asarray(y, dtype=float)
    dim = x_star.size
    local = np.random.default_rng((seed, iteration))
    rng = CounterRng(seed, stream=iteration * _STREAMS_PER_ITER)

    grid = make_grid(sched, cfg.steps)
    times = grid.times
    x_t = rng.normal(0, 1, dim)[0]
    tau_index = int(local.integers(0, cfg.steps))

    # Deterministic prefix down to tau; treated as data (no gradient).
    for j in range(tau_index):
        eps_hat = oracle.eps(sched, x_t, float(times[j]), y)
        x_t = dpm1_step(sched, x_t, float(times[j]), float(times[j + 1]),
                        eps_hat)
    x_tau = x_t

    # Differentiable ODE suffix with tapes and running error estimates.
    ode_states, tapes, coeffs, ode_errs = [x_tau], [], [], []
    x_cur = x_tau
    for j in range(tau_index, cfg.steps):
        t, t_prev = float(times[j]), float(times[j + 1])
        eps_hat, tape = oracle.eps_with_tape(sched, x_cur, t, y)
        eps_hat = eps_hat[0]
        ode_errs.append(_one_jump_error(sched, x_cur, t, eps_hat, x_star))
        alpha_t, sigma_t = sched.alpha_sigma(t)
        alpha_p, sigma_p = sched.alpha_sigma(t_prev)
        r = alpha_p / alpha_t
        c = r * sigma_t - sigma_p
        x_cur = r * x_cur - c * eps_hat
        ode_states.append(x_cur)
        tapes.append(tape)
        coeffs.append((r, c))

    # Candidate branch with per-candidate gamma jitter.
    scales = np.exp(cfg.gamma_jitter * local.standard_normal(cfg.n_candidates))
    cands = sample_candidates(
        oracle, sched, mod, x_tau, tau_index, grid, cfg.n_candidates,
        rng, x_star, cond=y, gamma_scales=scales,
    )
    rewards = np.array([reward(cfg.reward, c.endpoint, x_star) for c in cands])
    best = select_best(cands, lambda xh, xs: reward(cfg.reward, xh, xs), x_star)
    target = cands[best]

    # Loss: divergence to the winner at every matched time + anchor.
    loss = 0.0
    for k in range(1, len(ode_states)):
        loss += div_fn(cfg.divergence, ode_states[k], target.states[k])
    loss += cfg.anchor_weight * float(np.sum((ode_states[-1] - x_star) ** 2))

    metrics = {
        "iteration": iteration,
        "loss": loss,
        "reward_best": float(rewards[best]),
        "reward_mean": float(np.mean(rewards)),
        "gamma_mean": float(np.mean(target.gammas)) if len(target.gammas) else 0.0,
    }
    if not np.isfinite(loss):
        state.skip_streak += 1
        if state.skip_streak >= 10:
            raise NumericsError("10 consecutive non-finite alignment losses")
        metrics["skipped"] = True
        return metrics
    state.skip_streak = 0

    # Adjoint sweep over the recorded ODE suffix.
    grad_theta = np.zeros_like(oracle.net.theta)
    n_seg = len(tapes)
    g = _divergence_grad(cfg.divergence, ode_states[n_seg],
                         target.states[n_seg]) \
        + cfg.anchor_weight * 2.0 * (ode_states[n_seg] - x_star)
    for k in range(n_seg - 1, -1, -1):
        r, c = coeffs[k]
        b_t = oracle.base_coeff(sched, float(times[tau_index + k]))
        gt, gx = oracle.backprop(tapes[k], (-c * g)[None, :])
        grad_theta += gt
        g = (r - c * b_t) * g + gx[0]
        if k > 0:
            g = g + _divergence_grad(cfg.divergence, ode_states[k],
                                     target.states[k])
    oracle.net.set_theta(state.opt_theta.step(oracle.net.theta, grad_theta))

    # Modulator regression toward the winner's realized gammas.
    if len(target.gammas):
        errs = np.asarray(ode_errs, dtype=float)
        ts = times[tau_index:-1]
        raw = mod._raw(errs, ts)
        pred = _softplus(raw)
        resid = pred - target.gammas
        psi_loss_grad = 2.0 * resid / resid.size
        upstream = (psi_loss_grad * _sigmoid(raw))[:, None]
        feats = np.stack([errs, np.broadcast_to(ts, errs.shape)], axis=1)
        _, tape = mod.net.forward(feats, train=True)
        grad_psi, _ = mod.net.backward(tape, upstream)
        mod.net.set_theta(state.opt_psi.step(mod.net.theta, grad_psi))
    return metrics


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def align_train(oracle: NetOracle, mod: GammaModulator, dataset,
                sched: NoiseSchedule, cfg: AlignConfig, seed: int = 0):
    """Run cfg.iterations alignment steps over the dataset.

    Returns the per-iteration metrics log; weights update in place.
    """
    state = AlignState(
        opt_theta=Adam(oracle.net.n_params, lr=cfg.learning_rate),
        opt_psi=Adam(mod.net.n_params, lr=cfg.psi_learning_rate),
    )
    picker = np.random.default_rng((seed, 0xA11))
    log = []
    for it in range(cfg.iterations):
        idx = int(picker.integers(0, len(dataset)))
        log.append(align_step(
            oracle, mod, dataset.x_star[idx], dataset.y[idx],
            sched, cfg, seed, it, state,
        ))
    return log
