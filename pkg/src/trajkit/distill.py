"""Cost-aware trajectory distillation with interpolated starts and
negative guidance, plus the distillation-cost analyzer.

A k-step student is trained to match targets mixing teacher multi-step
generations with ground truth. Two task-aware augmentations:

- initial-state interpolation: start the reverse chain from
  α_{T−δ} y + σ_{T−δ} ε instead of pure noise, with δ capped so the
  start SNR stays below a threshold;
- negative guidance: extrapolate the ε-prediction away from the noise
  estimate ε̃ implied by the low-quality input, ε̂ = (1+w)ε_θ − w ε̃.

The cost analyzer inverts recorded solver steps to the ε̌ each sparse
segment implies and accumulates ‖ε̌ − ε_θ‖ over the sparse grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericsError
from .integrator import DPM1, Trajectory, dpm1_step, integrate
from .nn import Adam
from .oracle import NetOracle
from .rng import CounterRng
from .schedule import VE, NoiseSchedule, TimeGrid, make_grid

_STREAMS_PER_ITER = 8

SINGULAR_GUIDANCE_ABORT = 1e-9
GUIDANCE_GATE = 1e-6


@dataclass
class DistillConfig:
    """Hyperparameters of the distillation loop."""

    k: int = 1
    delta: float | None = None
    w: float = 0.1
    teacher_steps: int = 40
    mix_ratio: float = 0.5
    learning_rate: float = 1e-3
    iterations: int = 500
    snr_threshold: float = 1e-3
    max_grad_norm: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"student step count must be >= 1, got {self.k}")
        if not (0.0 <= self.mix_ratio <= 1.0):
            raise ConfigError(f"mix_ratio must lie in [0, 1], got {self.mix_ratio}")


def default_delta(sched: NoiseSchedule, teacher_steps: int = 40,
                  snr_threshold: float = 1e-3) -> float:
    """Largest teacher-grid offset δ keeping SNR(T−δ) below threshold.

    The start state should carry as much of y as the low-SNR constraint
    allows, so the deepest admissible grid point is chosen.
    """
    grid = make_grid(sched, teacher_steps)
    snr = np.exp(sched.lam(grid.times))
    ok = snr < snr_threshold
    if not np.any(ok):
        return 0.0
    return float(sched.t_max - np.min(grid.times[ok]))


def resolve_delta(sched: NoiseSchedule, cfg: DistillConfig) -> float:
    if cfg.delta is not None:
        return float(cfg.delta)
    return default_delta(sched, cfg.teacher_steps, cfg.snr_threshold)


def interp_init(sched: NoiseSchedule, y, delta: float,
                rng: CounterRng | None = None, step: int = 0, noise=None,
                snr_threshold: float = 1e-3):
    """Interpolated start state α_{T−δ} y + σ_{T−δ} ε at time T−δ."""
    y = np.asarray(y, dtype=float)
    t0 = sched.t_max - delta
    if not (sched.t_min < t0 <= sched.t_max):
        raise ConfigError(f"start time T−δ = {t0} outside schedule range")
    if np.exp(float(sched.lam(t0))) >= snr_threshold:
        raise ConfigError(
            f"start SNR {np.exp(float(sched.lam(t0))):.3g} at T−δ={t0} "
            f"exceeds threshold {snr_threshold}"
        )
    alpha, sigma = sched.alpha_sigma(t0)
    if noise is None:
        flat = np.atleast_2d(y)
        noise = rng.normal(step, flat.shape[0], flat.shape[1]).reshape(y.shape)
    return alpha * y + sigma * noise, t0


def _guidance_denominator(sched: NoiseSchedule, t: float) -> float:
    alpha_t, sigma_t = sched.alpha_sigma(t)
    alpha_0, sigma_0 = sched.alpha_sigma(sched.t_min)
    return float(sigma_t * alpha_0 / alpha_t - sigma_0)


def eps_tilde(sched: NoiseSchedule, x_t, t, y):
    """Noise estimate implied by pretending the chain ends at y.

    ε̃ = ((α_0/α_t) x_t − y) / (σ_t α_0/α_t − σ_0); inverting the
    one-jump semi-linear step from (x_t, t) to t_min with endpoint y.
    """
    x_t = np.asarray(x_t, dtype=float)
    y = np.asarray(y, dtype=float)
    den = _guidance_denominator(sched, t)
    if abs(den) < SINGULAR_GUIDANCE_ABORT:
        raise NumericsError(
            f"singular guidance denominator {den:.3g} at t={t}"
        )
    alpha_t, _ = sched.alpha_sigma(t)
    alpha_0, _ = sched.alpha_sigma(sched.t_min)
    return ((alpha_0 / alpha_t) * x_t - y) / den


def guided_eps(eps_theta_out, eps_tilde_out, w: float):
    """Negative-guidance combination (1+w) ε_θ − w ε̃."""
    return (1.0 + w) * np.asarray(eps_theta_out, dtype=float) \
        - w * np.asarray(eps_tilde_out, dtype=float)


def _guidance_active(sched: NoiseSchedule, t: float, w: float) -> bool:
    return w != 0.0 and abs(_guidance_denominator(sched, t)) >= GUIDANCE_GATE


def infer(oracle, sched: NoiseSchedule, y, k: int, w: float,
          rng: CounterRng, delta: float | None = None,
          snr_threshold: float = 1e-3, cond=None):
    """k-step guided reconstruction from an interpolated start.

    cond defaults to y for conditional oracles. Returns (X̂₀, Trajectory).
    """
    y = np.asarray(y, dtype=float)
    if delta is None:
        delta = default_delta(sched, snr_threshold=snr_threshold)
    if cond is None:
        cond = y
    x, t0 = interp_init(sched, y, delta, rng=rng, step=0,
                        snr_threshold=snr_threshold)
    grid = make_grid(sched, k, start=t0)
    states = [x]
    for j in range(k):
        t, t_prev = float(grid.times[j]), float(grid.times[j + 1])
        eps_hat = oracle.eps(sched, x, t, cond)
        if _guidance_active(sched, t, w):
            eps_hat = guided_eps(eps_hat, eps_tilde(sched, x, t, y), w)
        x = dpm1_step(sched, x, t, t_prev, eps_hat)
        if not np.all(np.isfinite(x)):
            raise NumericsError(f"inference diverged at step {j}")
        states.append(x)
    traj = Trajectory(times=grid.times.copy(), states=np.asarray(states),
                      solver=DPM1, seed=rng.seed, stream=rng.stream)
    return x, traj


def teacher_generate(teacher, sched: NoiseSchedule, y, steps: int,
                     rng: CounterRng, step: int = 0):
    """Teacher multi-step conditional generation from pure noise."""
    y = np.asarray(y, dtype=float)
    flat = np.atleast_2d(y)
    x = rng.normal(step, flat.shape[0], flat.shape[1]).reshape(y.shape)
    grid = make_grid(sched, steps)
    traj = integrate(DPM1, sched, teacher, grid, x, cond=y)
    return traj.endpoint


@dataclass
class DistillState:
    """Mutable optimizer state threaded through distill_step calls."""

    opt: Adam
    skip_streak: int = 0


def distill_step(student: NetOracle, teacher, x_star, y,
                 sched: NoiseSchedule, cfg: DistillConfig, seed: int,
                 iteration: int, state: DistillState):
    """One distillation update on a single (x*, y) pair.

    The target X₀^▽ is the ground truth with probability mix_ratio,
    otherwise the teacher's dense generation. The student runs its
    k-step guided chain from the interpolated start and descends the
    squared L2 endpoint mismatch.
    """
    x_star = np.asarray(x_star, dtype=float)
    y = np.asarray(y, dtype=float)
    local = np.random.default_rng((seed, iteration, 0xD15))
    rng = CounterRng(seed, stream=iteration * _STREAMS_PER_ITER)
    delta = resolve_delta(sched, cfg)

    if local.uniform() < cfg.mix_ratio:
        target = x_star
    else:
        target = teacher_generate(teacher, sched, y, cfg.teacher_steps,
                                  rng.substream(rng.stream + 1))

    x, t0 = interp_init(sched, y, delta, rng=rng, step=0,
                        snr_threshold=cfg.snr_threshold)
    grid = make_grid(sched, cfg.k, start=t0)
    tapes, records = [], []
    for j in range(cfg.k):
        t, t_prev = float(grid.times[j]), float(grid.times[j + 1])
        eps_net, tape = student.eps_with_tape(sched, x, t, y)
        eps_net = eps_net[0]
        active = _guidance_active(sched, t, cfg.w)
        if active:
            eps_hat = guided_eps(eps_net, eps_tilde(sched, x, t, y), cfg.w)
        else:
            eps_hat = eps_net
        alpha_t, sigma_t = sched.alpha_sigma(t)
        alpha_p, sigma_p = sched.alpha_sigma(t_prev)
        r = alpha_p / alpha_t
        c = r * sigma_t - sigma_p
        alpha_0, _ = sched.alpha_sigma(sched.t_min)
        q_over_den = (alpha_0 / alpha_t) / _guidance_denominator(sched, t) \
            if active else 0.0
        x = r * x - c * eps_hat
        tapes.append(tape)
        records.append((r, c, active, q_over_den, student.base_coeff(sched, t)))
    loss = float(np.sum((x - target) ** 2))

    if not np.isfinite(loss):
        state.skip_streak += 1
        if state.skip_streak >= 10:
            raise NumericsError("10 consecutive non-finite distillation losses")
        return {"iteration": iteration, "loss": loss, "skipped": True}
    state.skip_streak = 0

    # Adjoint through the guided chain. Each step is
    # x' = r x − c[(1+w) ε_net(x) − w (q x − y)/den], so the state-to-state
    # Jacobian is r − c(1+w) J_net + c w q/den.
    grad_theta = np.zeros_like(student.net.theta)
    g = 2.0 * (x - target)
    for j in range(cfg.k - 1, -1, -1):
        r, c, active, q_over_den, b_t = records[j]
        w_eff = cfg.w if active else 0.0
        gt, gx = student.backprop(tapes[j], (-c * (1.0 + w_eff) * g)[None, :])
        grad_theta += gt
        g = (r + c * w_eff * q_over_den - c * (1.0 + w_eff) * b_t) * g + gx[0]
    norm = float(np.linalg.norm(grad_theta))
    if cfg.max_grad_norm > 0 and norm > cfg.max_grad_norm:
        grad_theta *= cfg.max_grad_norm / norm
    student.net.set_theta(state.opt.step(student.net.theta, grad_theta))
    return {"iteration": iteration, "loss": loss}


def distill_train(student: NetOracle, teacher, dataset,
                  sched: NoiseSchedule, cfg: DistillConfig, seed: int = 0):
    """Run cfg.iterations distillation steps over the dataset."""
    state = DistillState(opt=Adam(student.net.n_params, lr=cfg.learning_rate))
    picker = np.random.default_rng((seed, 0xD157))
    log = []
    for it in range(cfg.iterations):
        idx = int(picker.integers(0, len(dataset)))
        log.append(distill_step(
            student, teacher, dataset.x_star[idx], dataset.y[idx],
            sched, cfg, seed, it, state,
        ))
    return log


# ---------------------------------------------------------------------------
# distillation cost
# ---------------------------------------------------------------------------

@dataclass
class CostReport:
    """Per-step distillation costs over a sparse grid and their sum."""

    per_step_costs: np.ndarray
    total: float
    k: int
    grid: TimeGrid = field(repr=False)

    def __post_init__(self):
        self.per_step_costs = np.asarray(self.per_step_costs, dtype=float)
        if np.any(self.per_step_costs < 0):
            raise ConfigError("per-step costs must be nonnegative")
        if abs(self.total - float(np.sum(self.per_step_costs))) > 1e-12:
            raise ConfigError("cost total does not match its summands")


def eps_check(sched: NoiseSchedule, x_prev, x_cur, t_prev, t_cur):
    """Invert one recorded solver step to the ε it implies.

    VP: ε̌ = (x_prev − r x_cur)/(σ_prev − r σ_cur) with r = α_prev/α_cur
    (the exact inverse of the semi-linear step); VE: ε̌ = Δx/Δσ along
    the step direction.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    x_cur = np.asarray(x_cur, dtype=float)
    alpha_c, sigma_c = sched.alpha_sigma(t_cur)
    alpha_p, sigma_p = sched.alpha_sigma(t_prev)
    if sched.kind == VE:
        den = sigma_p - sigma_c
        if abs(den) < 1e-14:
            raise NumericsError(f"degenerate step: Δσ = {den} at t={t_cur}")
        return (x_prev - x_cur) / den
    r = alpha_p / alpha_c
    den = sigma_p - r * sigma_c
    if abs(den) < 1e-14:
        raise NumericsError(f"degenerate step denominator {den} at t={t_cur}")
    return (x_prev - r * x_cur) / den


def trajectory_cost(dense: Trajectory, sparse: TimeGrid, oracle,
                    sched: NoiseSchedule, cond=None) -> CostReport:
    """Cost of distilling a dense trajectory onto a sparse grid.

    Sub-samples the dense states at the sparse timestamps, inverts each
    sparse segment to its implied ε̌, and scores ‖ε̌ − ε_θ(X_t, t)‖₂ at
    the segment start.
    """
    dense_times = np.asarray(dense.times, dtype=float)
    idx = []
    for t in sparse.times:
        j = np.argmin(np.abs(dense_times - t))
        if abs(dense_times[j] - t) > 1e-9:
            raise ConfigError(
                f"sparse timestamp {t} absent from dense trajectory"
            )
        idx.append(int(j))
    states = dense.states[idx]
    costs = []
    for i in range(len(idx) - 1):
        t_cur, t_prev = float(sparse.times[i]), float(sparse.times[i + 1])
        ec = eps_check(sched, states[i + 1], states[i], t_prev, t_cur)
        et = oracle.eps(sched, states[i], t_cur, cond)
        costs.append(float(np.linalg.norm(ec - et)))
    costs = np.asarray(costs)
    return CostReport(per_step_costs=costs, total=float(np.sum(costs)),
                      k=len(costs), grid=sparse)


def write_cost_report(report: CostReport, path):
    """Emit a cost report as delimiter-separated text."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k\tstep_index\tt\tcost\ttotal\n")
        for i, c in enumerate(report.per_step_costs):
            fh.write(f"{report.k}\t{i}\t{report.grid.times[i]:.17g}\t"
                     f"{c:.17g}\t{report.total:.17g}\n")


# ---------------------------------------------------------------------------
# interpolation error-ratio probe
# ---------------------------------------------------------------------------

def error_ratio_probe(sched: NoiseSchedule, scale: float = 0.7,
                      n: int = 1000, delta: float = 5e-3,
                      seed: int = 0):
    """Single-step error ratio of interpolated vs pure-noise starts.

    For clean X ~ N((2,2), I), degraded Y = scale·X, and shared noise ε,
    compare the ε a one-jump solve to t_min would need to reach X from
    (a) the interpolated start α_{T−δ} Y + σ_{T−δ} ε and (b) the pure
    noise start σ_T ε. Returns (mean error ratio, mean ‖X−Y‖/‖X‖).
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2)) + np.array([2.0, 2.0])
    y = scale * x
    eps = rng.standard_normal((n, 2))
    t_hi = sched.t_max
    t_lo = sched.t_max - delta
    alpha_0, sigma_0 = sched.alpha_sigma(sched.t_min)

    def required_eps(start, tau):
        alpha_tau, sigma_tau = sched.alpha_sigma(tau)
        q = alpha_0 / alpha_tau
        return (q * start - x) / (q * sigma_tau - sigma_0)

    alpha_i, sigma_i = sched.alpha_sigma(t_lo)
    _, sigma_hi = sched.alpha_sigma(t_hi)
    e_interp = np.linalg.norm(required_eps(alpha_i * y + sigma_i * eps, t_lo)
                              - eps, axis=1)
    e_noise = np.linalg.norm(required_eps(sigma_hi * eps, t_hi) - eps, axis=1)
    ratio = float(np.mean(e_interp / e_noise))
    rel_shift = float(np.mean(np.linalg.norm(x - y, axis=1)
                              / np.linalg.norm(x, axis=1)))
    return ratio, rel_shift
