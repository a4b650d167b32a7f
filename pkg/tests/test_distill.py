"""Distillation tests: interpolated starts, guidance, costs, adjoints."""

import numpy as np
import pytest

from trajkit.distill import (CostReport, DistillConfig, DistillState,
                             default_delta, distill_step, eps_check,
                             eps_tilde, error_ratio_probe, guided_eps, infer,
                             interp_init, resolve_delta, teacher_generate,
                             trajectory_cost)
from trajkit.errors import ConfigError, NumericsError
from trajkit.integrator import DPM1, Trajectory, integrate
from trajkit.oracle import GaussianOracle, NetOracle
from trajkit.rng import CounterRng
from trajkit.schedule import TimeGrid, make_grid, ve_default, vp_default
from trajkit.task import DegradationOp, gen_dataset
from trajkit import verify

# Quad-precision references on the default VP schedule.
DEFAULT_DELTA_REF = 0.14985        # largest 40-step grid offset, SNR < 1e-3
EPS_TILDE_DEN_REF = 7.3300753632757998447                   # at t = 0.6
EPS_TILDE_REF = np.array([1.1892679098594906459,
                          -0.41735003398392189798])


def test_default_delta_frozen():
    sched = vp_default()
    delta = default_delta(sched)
    assert delta == pytest.approx(DEFAULT_DELTA_REF, abs=1e-12)
    # The start SNR at T−δ must actually sit below the threshold.
    assert np.exp(float(sched.lam(sched.t_max - delta))) < 1e-3
    # A threshold below every grid SNR leaves no admissible offset.
    assert default_delta(sched, snr_threshold=1e-30) == 0.0


def test_resolve_delta():
    sched = vp_default()
    assert resolve_delta(sched, DistillConfig(delta=0.05)) == 0.05
    assert resolve_delta(sched, DistillConfig()) == pytest.approx(
        DEFAULT_DELTA_REF, abs=1e-12)


def test_interp_init_formula_and_guard():
    sched = vp_default()
    y = np.array([0.5, -0.5])
    noise = np.array([1.0, 2.0])
    state, t0 = interp_init(sched, y, 0.1, noise=noise)
    alpha, sigma = sched.alpha_sigma(sched.t_max - 0.1)
    assert t0 == sched.t_max - 0.1
    assert np.max(np.abs(state - (alpha * y + sigma * noise))) < 1e-15
    with pytest.raises(ConfigError):
        interp_init(sched, y, 0.5, noise=noise)      # SNR ≈ 1 ≥ threshold
    with pytest.raises(ConfigError):
        interp_init(sched, y, 1.5, noise=noise)      # leaves the time range


def test_eps_tilde_frozen():
    sched = vp_default()
    out = eps_tilde(sched, np.array([1.3, -0.4]), 0.6, np.array([0.9, 0.1]))
    assert np.max(np.abs(out - EPS_TILDE_REF)) < 1e-12


def test_eps_tilde_singular_at_t_min():
    sched = vp_default()
    with pytest.raises(NumericsError):
        eps_tilde(sched, np.zeros(2), sched.t_min, np.zeros(2))


def test_guided_eps():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert np.array_equal(guided_eps(e1, e2, 0.0), e1)
    assert np.array_equal(guided_eps(e1, e2, 0.5), 1.5 * e1 - 0.5 * e2)
    rec = verify.check_guided_affine()
    assert rec["passed"], rec


def test_infer_deterministic_and_on_grid():
    sched = vp_default()
    oracle = GaussianOracle([2.0, 2.0], 1.0)
    y = np.array([1.4, 1.4])
    xh1, traj = infer(oracle, sched, y, k=5, w=0.1, rng=CounterRng(0, 3))
    xh2, _ = infer(oracle, sched, y, k=5, w=0.1, rng=CounterRng(0, 3))
    assert np.array_equal(xh1, xh2)
    assert traj.times[0] == pytest.approx(sched.t_max - DEFAULT_DELTA_REF)
    assert traj.times[-1] == sched.t_min
    assert traj.states.shape == (6, 2)
    assert np.array_equal(traj.endpoint, xh1)


def test_eps_check_inverts_solver_steps():
    rec = verify.check_eps_check_inversion()
    assert rec["passed"], rec


def test_eps_check_degenerate_step():
    sched = ve_default()
    with pytest.raises(NumericsError):
        eps_check(sched, np.zeros(2), np.zeros(2), 0.5, 0.5)


def test_trajectory_cost_zero_on_dense_grid():
    """Re-inverting every dense DPM step recovers the ε the oracle gave."""
    sched = vp_default()
    oracle = GaussianOracle([1.0, 1.0], 2.0)
    grid = make_grid(sched, 12)
    traj = integrate(DPM1, sched, oracle, grid,
                     CounterRng(0).normal(0, 1, 2)[0])
    report = trajectory_cost(traj, grid, oracle, sched)
    assert report.k == 12
    assert np.max(report.per_step_costs) < 1e-9
    assert report.total == pytest.approx(float(np.sum(report.per_step_costs)))


def test_trajectory_cost_timestamp_mismatch():
    sched = vp_default()
    oracle = GaussianOracle([0.0, 0.0], 1.0)
    grid = make_grid(sched, 8)
    traj = integrate(DPM1, sched, oracle, grid, np.zeros(2))
    bad = TimeGrid(times=np.array([0.93, 0.41]))
    with pytest.raises(ConfigError):
        trajectory_cost(traj, bad, oracle, sched)


def test_cost_report_validation():
    grid = TimeGrid(times=np.array([1.0, 0.5, 0.001]))
    with pytest.raises(ConfigError):
        CostReport(per_step_costs=[-1.0, 2.0], total=1.0, k=2, grid=grid)
    with pytest.raises(ConfigError):
        CostReport(per_step_costs=[1.0, 2.0], total=5.0, k=2, grid=grid)


def test_error_ratio_probe_rel_shift_exact():
    ratio, rel_shift = error_ratio_probe(vp_default(), scale=0.7)
    # y = 0.7 x makes ‖x − y‖/‖x‖ exactly 0.3 for every sample.
    assert rel_shift == pytest.approx(0.3, abs=1e-12)
    assert ratio > 0.0


def test_distill_config_validation():
    with pytest.raises(ConfigError):
        DistillConfig(k=0)
    with pytest.raises(ConfigError):
        DistillConfig(mix_ratio=1.5)


class _GradProbe:
    """Optimizer stub capturing the gradient without changing weights."""

    def __init__(self):
        self.grad = None

    def step(self, theta, grad):
        self.grad = grad.copy()
        return theta


def _distill_loss_and_grad(theta, student, teacher, xs, y, sched, cfg):
    student.net.set_theta(theta)
    probe = _GradProbe()
    rec = distill_step(student, teacher, xs, y, sched, cfg, seed=0,
                       iteration=1, state=DistillState(opt=probe))
    return rec["loss"], probe.grad


def test_distill_adjoint_matches_finite_differences():
    """End-to-end check of the guided-chain adjoint, prior term included."""
    sched = vp_default()
    ds = gen_dataset("ring", 16, DegradationOp.scaling(0.7, noise_std=0.05), 0)
    teacher = NetOracle(2, cond_dim=2, hidden=(6, 6), seed=0,
                        base_scale=np.sqrt(0.5))
    rng = np.random.default_rng(7)
    teacher.net.set_theta(rng.standard_normal(teacher.net.n_params) * 0.1)
    student = teacher.clone()
    cfg = DistillConfig(k=3, w=0.1, mix_ratio=1.0, teacher_steps=8,
                        iterations=1)
    theta = student.net.theta.copy()
    _, grad = _distill_loss_and_grad(theta, student, teacher, ds.x_star[0],
                                     ds.y[0], sched, cfg)
    h = 1e-6
    checked = 0
    for i in rng.choice(theta.size, 15, replace=False):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        lp, _ = _distill_loss_and_grad(tp, student, teacher, ds.x_star[0],
                                       ds.y[0], sched, cfg)
        lm, _ = _distill_loss_and_grad(tm, student, teacher, ds.x_star[0],
                                       ds.y[0], sched, cfg)
        fd = (lp - lm) / (2 * h)
        scale = max(abs(fd), abs(grad[i]), 1e-4)
        assert abs(fd - grad[i]) / scale < 1e-4
        checked += 1
    assert checked == 15


def test_distill_step_reports_loss_and_updates():
    sched = vp_default()
    ds = gen_dataset("ring", 16, DegradationOp.scaling(0.7, noise_std=0.05), 0)
    teacher = NetOracle(2, cond_dim=2, hidden=(8,), seed=0,
                        base_scale=np.sqrt(0.5))
    student = teacher.clone()
    from trajkit.nn import Adam
    state = DistillState(opt=Adam(student.net.n_params, lr=1e-3))
    theta0 = student.net.theta.copy()
    rec = distill_step(student, teacher, ds.x_star[0], ds.y[0], sched,
                       DistillConfig(k=2, teacher_steps=8), 0, 0, state)
    assert np.isfinite(rec["loss"])
    assert not np.array_equal(student.net.theta, theta0)


def test_teacher_generate_deterministic():
    sched = vp_default()
    oracle = GaussianOracle([2.0, 2.0], 1.0)
    y = np.array([1.4, 1.4])
    a = teacher_generate(oracle, sched, y, 8, CounterRng(0, 5))
    b = teacher_generate(oracle, sched, y, 8, CounterRng(0, 5))
    assert np.array_equal(a, b)
    assert a.shape == (2,)
