"""Continuous-time noise schedules and discretized time grids.

Each schedule defines the marginal q(x_t | x_0) = N(α_t x_0, σ_t² I)
via (α_t, σ_t) as functions of t. Convention: t = t_min is (almost)
clean data, t = t_max is maximum noise.

Supported families:

- VP: variance preserving, α_t² + σ_t² = 1, parameterized by a
  log-SNR λ_t = log(α_t/σ_t) that is linear in t from lambda_max
  down to lambda_min. Then α = √sigmoid(2λ), σ = √(1−α²).
- VE: variance exploding, α_t = 1, σ_t = σ_min (σ_max/σ_min)^t.
- RectFlow: linear interpolation, α_t = 1−t, σ_t = t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError

VP = "VP"
VE = "VE"
RECTFLOW = "RectFlow"

KINDS = (VP, VE, RECTFLOW)

UNIFORM_T = "uniform-t"
UNIFORM_LAMBDA = "uniform-lambda"


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable description of a continuous noise schedule."""

    kind: str = VP
    t_min: float = 1e-3
    t_max: float = 1.0
    lambda_max: float = 10.0
    lambda_min: float = -10.0
    sigma_min: float = 0.01
    sigma_max: float = 50.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not (self.t_min > 0.0):
            raise ConfigError(f"t_min must be positive, got {self.t_min}")
        if not (self.t_max > self.t_min):
            raise ConfigError(
                f"t_max must exceed t_min, got t_min={self.t_min} t_max={self.t_max}"
            )
        if self.kind == VP and not (self.lambda_max > self.lambda_min):
            raise ConfigError(
                f"lambda_max must exceed lambda_min, got "
                f"[{self.lambda_min}, {self.lambda_max}]"
            )
        if self.kind == VE and not (0.0 < self.sigma_min < self.sigma_max):
            raise ConfigError(
                f"need 0 < sigma_min < sigma_max, got "
                f"({self.sigma_min}, {self.sigma_max})"
            )
        if self.kind == RECTFLOW and not (self.t_max <= 1.0):
            raise ConfigError(f"RectFlow requires t_max <= 1, got {self.t_max}")

    # -- time range ---------------------------------------------------------

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.t_min, self.t_max
        if self.kind == RECTFLOW:
            lo, hi = 0.0, 1.0
        eps = 1e-12
        if np.any(t < lo - eps) or np.any(t > hi + eps):
            bad = t[(t < lo - eps) | (t > hi + eps)]
            raise ConfigError(
                f"t={float(np.atleast_1d(bad)[0])} outside schedule range "
                f"[{lo}, {hi}]"
            )
        return t

    # -- core evaluation ----------------------------------------------------

    def lam(self, t):
        """Log-SNR λ_t = log(α_t/σ_t)."""
        t = self._check_t(t)
        if self.kind == VP:
            u = (t - self.t_min) / (self.t_max - self.t_min)
            return self.lambda_max + u * (self.lambda_min - self.lambda_max)
        if self.kind == VE:
            return -np.log(self.sigma_min) - t * np.log(self.sigma_max / self.sigma_min)
        with np.errstate(divide="ignore"):
            return np.log((1.0 - t) / np.where(t > 0, t, 1.0)) + np.where(
                t > 0, 0.0, np.inf
            )

    def alpha_sigma(self, t):
        """Return (α_t, σ_t)."""
        t = self._check_t(t)
        if self.kind == VP:
            lam = self.lam(t)
            alpha = np.sqrt(expit(2.0 * lam))
            sigma = np.sqrt(expit(-2.0 * lam))
            return alpha, sigma
        if self.kind == VE:
            return np.ones_like(t), self.sigma_min * (self.sigma_max / self.sigma_min) ** t
        return 1.0 - t, t + 0.0


def eval_schedule(sched: NoiseSchedule, t):
    """Return (α_t, σ_t, λ_t) at time t (scalar or array)."""
    alpha, sigma = sched.alpha_sigma(t)
    return alpha, sigma, sched.lam(t)


def drift_diffusion(sched: NoiseSchedule, t):
    """Coefficients of the forward SDE dX = f(X,t)dt + g(t)dω.

    Returns (f_coeff, g_sq) where f(X,t) = f_coeff · X and g_sq = g²(t).
    VP: f_coeff = d log α/dt, g² = dσ²/dt − 2 (d log α/dt) σ².
    VE: f_coeff = 0, g² = dσ²/dt = 2 σ² ln(σ_max/σ_min).
    Closed forms only, no finite differencing.
    """
    if sched.kind == RECTFLOW:
        raise ConfigError("drift_diffusion is not defined for RectFlow schedules")
    t = np.asarray(t, dtype=float)
    alpha, sigma = sched.alpha_sigma(t)
    if sched.kind == VP:
        # λ linear in t: dλ/dt is a constant. With α² = sigmoid(2λ):
        # d log α/dt = σ² dλ/dt and g² = −2 σ² dλ/dt.
        dlam_dt = (sched.lambda_min - sched.lambda_max) / (sched.t_max - sched.t_min)
        f_coeff = sigma**2 * dlam_dt
        g_sq = -2.0 * sigma**2 * dlam_dt
        return f_coeff, g_sq
    log_ratio = np.log(sched.sigma_max / sched.sigma_min)
    return np.zeros_like(t), 2.0 * sigma**2 * log_ratio


@dataclass(frozen=True)
class TimeGrid:
    """Descending sequence of timestamps for a k-step sampler."""

    times: np.ndarray
    spacing: str = UNIFORM_LAMBDA

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 2:
            raise ConfigError("a TimeGrid needs at least two timestamps")
        if not np.all(np.diff(times) < 0):
            raise ConfigError("TimeGrid times must be strictly decreasing")

    @property
    def n_steps(self) -> int:
        return self.times.size - 1


def make_grid(sched: NoiseSchedule, k: int, spacing: str | None = None,
              start: float | None = None, end: float | None = None) -> TimeGrid:
    """Build a k-step grid of k+1 timestamps from start (default t_max) down
    to end (default t_min).

    spacing defaults to uniform-in-λ for VP/VE and uniform-in-t for RectFlow.
    """
    if k < 1:
        raise ConfigError(f"step count must be >= 1, got {k}")
    if spacing is None:
        spacing = UNIFORM_T if sched.kind == RECTFLOW else UNIFORM_LAMBDA
    if spacing not in (UNIFORM_T, UNIFORM_LAMBDA):
        raise ConfigError(f"unknown grid spacing {spacing!r}")
    t_hi = sched.t_max if start is None else float(start)
    t_lo = sched.t_min if end is None else float(end)
    if not t_hi > t_lo:
        raise ConfigError(f"grid start {t_hi} must exceed end {t_lo}")
    if spacing == UNIFORM_T:
        times = np.linspace(t_hi, t_lo, k + 1)
    else:
        if sched.kind == RECTFLOW:
            raise ConfigError("uniform-lambda grids are only defined for VP/VE")
        lam_hi = float(sched.lam(t_hi))
        lam_lo = float(sched.lam(t_lo))
        lams = np.linspace(lam_hi, lam_lo, k + 1)
        times = _invert_lambda(sched, lams)
        times[0], times[-1] = t_hi, t_lo
    return TimeGrid(times=times, spacing=spacing)


def _invert_lambda(sched: NoiseSchedule, lams):
    """Map log-SNR values back to times (VP and VE are both λ-linear in t)."""
    if sched.kind == VP:
        u = (lams - sched.lambda_max) / (sched.lambda_min - sched.lambda_max)
        return sched.t_min + u * (sched.t_max - sched.t_min)
    return (-np.log(sched.sigma_min) - lams) / np.log(sched.sigma_max / sched.sigma_min)


def vp_default() -> NoiseSchedule:
    """Default VP schedule: λ linear from +10 to −10 over [1e-3, 1]."""
    return NoiseSchedule(kind=VP)


def ve_default() -> NoiseSchedule:
    """Default VE schedule: σ from 0.01 to 50 over [1e-3, 1]."""
    return NoiseSchedule(kind=VE)


def rectflow_default() -> NoiseSchedule:
    """Rectified-flow interpolation schedule on [1e-3, 1]."""
    return NoiseSchedule(kind=RECTFLOW)
