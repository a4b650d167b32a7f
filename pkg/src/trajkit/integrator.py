"""Forward and reverse step rules plus the generic integral operator Ψ.

All reverse steps move from a noisier time t to a cleaner time
t_prev < t. States are double-precision arrays of shape (n, d) or (d,).

Solver kinds:

- DDPM_ANCESTRAL: posterior ancestral sampling on the discrete grid.
- REVERSE_SDE_EM / REVERSE_ODE_EULER: Euler(-Maruyama) baselines on the
  reverse SDE/ODE.
- DPM1: first-order semi-linear exponential-integrator step.
- MSDE_VP / MSDE_VE: modulated-SDE steps whose noise intensity is
  scaled by a per-step factor γ ≥ 0 (γ=0 is the ODE step, γ=1 the
  standard reverse SDE).
- RF_ODE / RF_SDE: rectified-flow Euler step and its stochastic
  counterpart with modulation factor alpha_mod ≥ 1.

The modulated-SDE noise coefficient has several published printings
that disagree; see docs/derivations.md. The `noise_variant` flag
selects among them, defaulting to the variant that preserves the
closed-form Gaussian marginals ("exact").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericsError
from .rng import CounterRng
from .schedule import RECTFLOW, VE, VP, NoiseSchedule, TimeGrid, drift_diffusion

DDPM_ANCESTRAL = "ddpm"
REVERSE_SDE_EM = "reverse_sde_em"
REVERSE_ODE_EULER = "reverse_ode_euler"
DPM1 = "dpm1"
MSDE_VP = "msde_vp"
MSDE_VE = "msde_ve"
RF_ODE = "rf_ode"
RF_SDE = "rf_sde"

SOLVER_KINDS = (
    DDPM_ANCESTRAL, REVERSE_SDE_EM, REVERSE_ODE_EULER, DPM1,
    MSDE_VP, MSDE_VE, RF_ODE, RF_SDE,
)

NOISE_EXACT = "exact"
NOISE_MAIN = "main"
NOISE_APPENDIX = "appendix"
NOISE_VARIANTS = (NOISE_EXACT, NOISE_MAIN, NOISE_APPENDIX)


@dataclass
class Trajectory:
    """Ordered (time, state) records of one integration run."""

    times: np.ndarray            # (k+1,)
    states: np.ndarray           # (k+1, n, d) or (k+1, d)
    solver: str
    seed: int = 0
    stream: int = 0
    gammas: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.times.shape[0]:
            raise ConfigError("trajectory states and times lengths differ")

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]


# ---------------------------------------------------------------------------
# individual step rules
# ---------------------------------------------------------------------------

def forward_diffuse(sched: NoiseSchedule, x0, t, rng: CounterRng | None,
                    step: int = 0, noise=None):
    """Sample the forward marginal: α_t x0 + σ_t ε, ε ~ N(0, I)."""
    x0 = np.asarray(x0, dtype=float)
    alpha, sigma = sched.alpha_sigma(t)
    if noise is None:
        flat = np.atleast_2d(x0)
        noise = rng.normal(step, flat.shape[0], flat.shape[1]).reshape(x0.shape)
    return alpha * x0 + sigma * noise


def ddpm_step(sched: NoiseSchedule, x, t, t_prev, eps_hat,
              rng: CounterRng | None = None, step: int = 0, noise=None):
    """Ancestral posterior step of the discrete denoising chain.

    With ᾱ the cumulative signal coefficient sampled from the continuous
    schedule, the per-step coefficient is a = (ᾱ_t/ᾱ_prev)² and

        mean = (x − (1−a)/√(1−ᾱ_t²) ε̂)/√a,
        var  = (1−ᾱ_prev²)/(1−ᾱ_t²) (1−a).
    """
    x = np.asarray(x, dtype=float)
    alpha_t, sigma_t = sched.alpha_sigma(t)
    alpha_p, sigma_p = sched.alpha_sigma(t_prev)
    a = (alpha_t / alpha_p) ** 2
    if not (0.0 < a <= 1.0 + 1e-15):
        raise ConfigError(f"per-step alpha ratio {a} outside (0, 1]")
    beta = 1.0 - a
    if beta == 0.0:
        return x.copy()
    mean = (x - beta / sigma_t * np.asarray(eps_hat, dtype=float)) / np.sqrt(a)
    var = sigma_p**2 / sigma_t**2 * beta
    if noise is None:
        flat = np.atleast_2d(x)
        noise = rng.normal(step, flat.shape[0], flat.shape[1]).reshape(x.shape)
    return mean + np.sqrt(var) * noise


def dpm1_step(sched: NoiseSchedule, x, t, t_prev, eps_hat):
    """First-order semi-linear exponential-integrator step.

    x_prev = (α_prev/α_t) x − ε̂ ((α_prev/α_t) σ_t − σ_prev), which equals
    (α_prev/α_t) x − σ_prev (e^h − 1) ε̂ with h the log-SNR increment.
    """
    x = np.asarray(x, dtype=float)
    alpha_t, sigma_t = sched.alpha_sigma(t)
    alpha_p, sigma_p = sched.alpha_sigma(t_prev)
    r = alpha_p / alpha_t
    return r * x - np.asarray(eps_hat, dtype=float) * (r * sigma_t - sigma_p)


def _msde_noise_std(sched, t, t_prev, gamma, variant):
    """Per-step noise standard deviation of the modulated-SDE solver."""
    if variant not in NOISE_VARIANTS:
        raise ConfigError(f"unknown noise variant {variant!r}")
    alpha_t, sigma_t = sched.alpha_sigma(t)
    alpha_p, sigma_p = sched.alpha_sigma(t_prev)
    if sched.kind == VP:
        if variant == NOISE_EXACT:
            # Itô variance of the linear reverse SDE over the step:
            # Var = γ² ((α_prev/α_t)² σ_t² − σ_prev²).
            r = alpha_p / alpha_t
            var = gamma**2 * (r**2 * sigma_t**2 - sigma_p**2)
            return np.sqrt(np.maximum(var, 0.0))
        coeff = alpha_p * np.sqrt(np.log(alpha_p / alpha_t))
        if variant == NOISE_MAIN:
            return np.sqrt(2.0) * gamma * coeff
        return gamma * coeff
    # VE: the exact Itô variance matches the no-√2 printing.
    var = gamma**2 * (sigma_t**2 - sigma_p**2)
    std = np.sqrt(np.maximum(var, 0.0))
    if variant == NOISE_MAIN:
        std = np.sqrt(2.0) * std
    return std


def msde_vp_step(sched: NoiseSchedule, x, t, t_prev, eps_hat, gamma,
                 rng: CounterRng | None = None, step: int = 0, noise=None,
                 variant: str = NOISE_EXACT):
    """Modulated-SDE solver step for VP schedules.

    x_prev = (α_prev/α_t) x − (1+γ²) ε̂ ((α_prev/α_t) σ_t − σ_prev) + std·ε̂_ω,
    degenerating to the semi-linear ODE step at γ=0.
    """
    if sched.kind != VP:
        raise ConfigError("msde_vp_step requires a VP schedule")
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ConfigError(f"gamma must be nonnegative, got {gamma}")
    x = np.asarray(x, dtype=float)
    alpha_t, sigma_t = sched.alpha_sigma(t)
    alpha_p, sigma_p = sched.alpha_sigma(t_prev)
    r = alpha_p / alpha_t
    out = r * x - (1.0 + gamma**2) * np.asarray(eps_hat, dtype=float) \
        * (r * sigma_t - sigma_p)
    if np.all(gamma == 0.0):
        return out
    std = _msde_noise_std(sched, t, t_prev, gamma, variant)
    if noise is None:
        flat = np.atleast_2d(x)
        noise = rng.normal(step, flat.shape[0], flat.shape[1]).reshape(x.shape)
    return out + std * noise


def msde_ve_step(sched: NoiseSchedule, x, t, t_prev, eps_hat, gamma,
                 rng: CounterRng | None = None, step: int = 0, noise=None,
                 variant: str = NOISE_EXACT):
    """Modulated-SDE solver step for VE schedules.

    x_prev = x − (1+γ²) ε̂ (σ_t − σ_prev) + std·ε̂_ω.
    """
    if sched.kind != VE:
        raise ConfigError("msde_ve_step requires a VE schedule")
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ConfigError(f"gamma must be nonnegative, got {gamma}")
    x = np.asarray(x, dtype=float)
    _, sigma_t = sched.alpha_sigma(t)
    _, sigma_p = sched.alpha_sigma(t_prev)
    out = x - (1.0 + gamma**2) * np.asarray(eps_hat, dtype=float) \
        * (sigma_t - sigma_p)
    if np.all(gamma == 0.0):
        return out
    std = _msde_noise_std(sched, t, t_prev, gamma, variant)
    if noise is None:
        flat = np.atleast_2d(x)
        noise = rng.normal(step, flat.shape[0], flat.shape[1]).reshape(x.shape)
    return out + std * noise


def reverse_sde_em_step(sched: NoiseSchedule, x, t, t_prev, eps_hat,
                        rng: CounterRng | None = None, step: int = 0,
                        noise=None):
    """Euler-Maruyama step on the reverse SDE with score −ε̂/σ_t."""
    x = np.asarray(x, dtype=float)
    dt = t - t_prev
    _, sigma_t = sched.alpha_sigma(t)
    f_coeff, g_sq = drift_diffusion(sched, t)
    score = -np.asarray(eps_hat, dtype=float) / sigma_t
    drift = f_coeff * x - g_sq * score
    if noise is None:
        flat = np.atleast_2d(x)
        noise = rng.normal(step, flat.shape[0], flat.shape[1]).reshape(x.shape)
    return x - dt * drift + np.sqrt(g_sq * dt) * noise


def reverse_ode_euler_step(sched: NoiseSchedule, x, t, t_prev, eps_hat):
    """Euler step on the probability-flow ODE with score −ε̂/σ_t."""
    x = np.asarray(x, dtype=float)
    dt = t - t_prev
    _, sigma_t = sched.alpha_sigma(t)
    f_coeff, g_sq = drift_diffusion(sched, t)
    score = -np.asarray(eps_hat, dtype=float) / sigma_t
    drift = f_coeff * x - 0.5 * g_sq * score
    return x - dt * drift


def rf_ode_step(x, t, t_prev, velocity):
    """Euler step of the rectified flow: x_prev = x − (t − t_prev) v.

    velocity is the time derivative dX_t/dt of the interpolation path
    (pointing from data toward noise), so stepping backward subtracts it.
    """
    x = np.asarray(x, dtype=float)
    if not (0.0 <= t_prev < t <= 1.0):
        raise ConfigError(f"need 0 <= t_prev < t <= 1, got t={t} t_prev={t_prev}")
    return x - (t - t_prev) * np.asarray(velocity, dtype=float)


def rf_beta(t: float, dt: float, alpha_mod: float) -> float:
    """Noise amplitude β of the stochastic rectified-flow step.

    β² = (t−Δ)² (1−(t−αΔ))² / (1−(t−Δ))² − (t−αΔ)².
    Negative radicands (parameter extremes near t=0) raise a
    step-parameter error; α=1 gives β=0 identically.
    """
    if alpha_mod == 1.0:
        return 0.0
    td = t - dt
    ta = t - alpha_mod * dt
    beta_sq = td**2 * (1.0 - ta) ** 2 / (1.0 - td) ** 2 - ta**2
    if beta_sq < 0.0:
        raise ConfigError(
            f"negative beta^2 = {beta_sq} for step parameters "
            f"t={t}, dt={dt}, alpha_mod={alpha_mod}"
        )
    return float(np.sqrt(beta_sq))


def rf_sde_step(x, t, dt, velocity, alpha_mod,
                rng: CounterRng | None = None, step: int = 0, noise=None):
    """Stochastic rectified-flow step sharing the ODE's time marginals.

    x_prev = (x − α Δ v − β ε) / ((1 + αΔ − t) + √((t − αΔ)² + β²)),
    with β from rf_beta; α = 1 recovers the deterministic Euler step.
    """
    x = np.asarray(x, dtype=float)
    if alpha_mod < 1.0:
        raise ConfigError(f"alpha_mod must be >= 1, got {alpha_mod}")
    if t - dt < 0.0:
        raise ConfigError(f"step leaves [0, 1]: t={t}, dt={dt}")
    beta = rf_beta(t, dt, alpha_mod)
    num = x - alpha_mod * dt * np.asarray(velocity, dtype=float)
    if beta != 0.0:
        if noise is None:
            flat = np.atleast_2d(x)
            noise = rng.normal(step, flat.shape[0], flat.shape[1]).reshape(x.shape)
        num = num - beta * noise
    ta = t - alpha_mod * dt
    denom = (1.0 + alpha_mod * dt - t) + np.sqrt(ta**2 + beta**2)
    return num / denom


# ---------------------------------------------------------------------------
# the integral operator
# ---------------------------------------------------------------------------

def _as_batch(x0):
    x0 = np.asarray(x0, dtype=float)
    squeeze = x0.ndim == 1
    return np.atleast_2d(x0), squeeze


def integrate(solver: str, sched: NoiseSchedule, oracle, grid: TimeGrid,
              x0, gammas=None, alpha_mod: float = 1.5,
              rng: CounterRng | None = None, cond=None,
              eps_transform=None, noise_variant: str = NOISE_EXACT,
              record_tapes: bool = False) -> Trajectory:
    """Run one solver over a descending time grid, recording every state.

    oracle provides eps(sched, x, t, cond) (or velocity(...) for
    rectified-flow solvers). gammas is a per-step vector for the
    modulated-SDE solvers (scalars broadcast). eps_transform, if given,
    maps (eps_hat, x, t) to the ε̂ actually used (guidance hook).

    Raises NumericsError naming the step index if any state goes
    non-finite.
    """
    if solver not in SOLVER_KINDS:
        raise ConfigError(f"unknown solver kind {solver!r}")
    times = grid.times
    n_steps = times.size - 1
    x, squeeze = _as_batch(x0)
    if gammas is None:
        gammas = np.zeros(n_steps)
    gammas = np.broadcast_to(np.asarray(gammas, dtype=float), (n_steps,))
    states = np.empty((n_steps + 1,) + x.shape, dtype=float)
    states[0] = x
    tapes = [] if record_tapes else None
    for i in range(n_steps):
        t, t_prev = float(times[i]), float(times[i + 1])
        if solver in (RF_ODE, RF_SDE):
            vel = oracle.velocity(sched, x, t, cond)
            if solver == RF_ODE:
                x = rf_ode_step(x, t, t_prev, vel)
            else:
                x = rf_sde_step(x, t, t - t_prev, vel, alpha_mod,
                                rng=rng, step=i)
        else:
            if record_tapes:
                eps_hat, tape = oracle.eps_with_tape(sched, x, t, cond)
                tapes.append(tape)
            else:
                eps_hat = oracle.eps(sched, x, t, cond)
            if eps_transform is not None:
                eps_hat = eps_transform(eps_hat, x, t)
            if solver == DPM1:
                x = dpm1_step(sched, x, t, t_prev, eps_hat)
            elif solver == MSDE_VP:
                x = msde_vp_step(sched, x, t, t_prev, eps_hat, gammas[i],
                                 rng=rng, step=i, variant=noise_variant)
            elif solver == MSDE_VE:
                x = msde_ve_step(sched, x, t, t_prev, eps_hat, gammas[i],
                                 rng=rng, step=i, variant=noise_variant)
            elif solver == DDPM_ANCESTRAL:
                x = ddpm_step(sched, x, t, t_prev, eps_hat, rng=rng, step=i)
            elif solver == REVERSE_SDE_EM:
                x = reverse_sde_em_step(sched, x, t, t_prev, eps_hat,
                                        rng=rng, step=i)
            else:
                x = reverse_ode_euler_step(sched, x, t, t_prev, eps_hat)
        if not np.all(np.isfinite(x)):
            raise NumericsError(f"integration diverged at step {i} (t={t})")
        states[i + 1] = x
    if squeeze:
        states = states[:, 0, :]
    traj = Trajectory(
        times=times.copy(), states=states, solver=solver,
        seed=rng.seed if rng is not None else 0,
        stream=rng.stream if rng is not None else 0,
    )
    if record_tapes:
        return traj, tapes
    return traj


def dump_trajectories(trajs: list[Trajectory], path):
    """Write trajectories as delimiter-separated text, one record per
    (trajectory, step), floats at 17 significant digits."""
    trajs = list(trajs)
    with open(path, "w", encoding="utf-8") as fh:
        dim = np.atleast_2d(trajs[0].states[0]).shape[-1]
        cols = ["trajectory_id", "step", "t"] + [f"x{j}" for j in range(dim)]
        fh.write("\t".join(cols) + "\n")
        next_id = 0
        for traj in trajs:
            states = traj.states
            if states.ndim == 2:
                states = states[:, None, :]
            for b in range(states.shape[1]):
                for s in range(states.shape[0]):
                    row = [str(next_id), str(s), f"{traj.times[s]:.17g}"]
                    row += [f"{v:.17g}" for v in states[s, b]]
                    fh.write("\t".join(row) + "\n")
                next_id += 1


def load_trajectory_states(path) -> np.ndarray:
    """Reload a trajectory dump into an array (records, columns)."""
    return np.loadtxt(path, skiprows=1)
