"""Alignment tests: modulator, candidate branching, best-of-N updates."""

import numpy as np
import pytest

from trajkit.align import (AlignConfig, AlignState, GammaModulator,
                           _one_jump_error, align_step, gamma_eval,
                           sample_candidates, select_best)
from trajkit.errors import ConfigError, NumericsError
from trajkit.integrator import Trajectory, DPM1, dpm1_step
from trajkit.nn import Adam
from trajkit.oracle import NetOracle
from trajkit.rng import CounterRng
from trajkit.schedule import make_grid, vp_default
from trajkit.task import DegradationOp, gen_dataset


def _fresh_setup(seed=0):
    sched = vp_default()
    ds = gen_dataset("ring", 32, DegradationOp.scaling(0.7, noise_std=0.05),
                     seed)
    oracle = NetOracle(2, cond_dim=2, hidden=(8, 8), seed=seed,
                       base_scale=np.sqrt(0.5))
    mod = GammaModulator(seed=seed)
    return sched, ds, oracle, mod


def test_fresh_modulator_outputs_log_two():
    mod = GammaModulator(seed=0)
    assert float(gamma_eval(mod, 0.5, 0.3)) == pytest.approx(np.log(2.0))


def test_modulator_positive_and_validated():
    mod = GammaModulator(seed=1)
    mod.net.set_theta(np.random.default_rng(0)
                      .standard_normal(mod.net.n_params))
    errs = np.linspace(0.0, 5.0, 11)
    gammas = gamma_eval(mod, errs, 0.5)
    assert np.all(gammas > 0.0)
    with pytest.raises(ConfigError):
        gamma_eval(mod, -1.0, 0.5)
    with pytest.raises(ConfigError):
        gamma_eval(mod, np.nan, 0.5)


def test_one_jump_error_definition():
    sched = vp_default()
    x = np.array([0.4, -0.2])
    eps = np.array([0.1, 0.3])
    x_star = np.array([1.0, 1.0])
    expect = np.linalg.norm(
        dpm1_step(sched, x, 0.5, sched.t_min, eps) - x_star)
    assert _one_jump_error(sched, x, 0.5, eps, x_star) == pytest.approx(
        float(expect), abs=1e-15)


def _mock_traj(endpoint):
    return Trajectory(times=np.array([1.0, 0.5]),
                      states=np.array([endpoint, endpoint]), solver=DPM1)


def test_select_best():
    x_star = np.zeros(2)
    cands = [_mock_traj(np.array([3.0, 0.0])),
             _mock_traj(np.array([0.1, 0.0])),
             _mock_traj(np.array([0.1, 0.0]))]

    def neg_mse(xh, xs):
        return -float(np.mean((xh - xs) ** 2))

    assert select_best(cands, neg_mse, x_star) == 1     # ties break low
    with pytest.raises(ConfigError):
        select_best([], neg_mse, x_star)
    with pytest.raises(NumericsError):
        select_best(cands, lambda *_: np.nan, x_star)


def test_sample_candidates_shapes_and_determinism():
    sched, ds, oracle, mod = _fresh_setup()
    grid = make_grid(sched, 6)
    rng = CounterRng(0, stream=0)
    x_tau = np.array([0.3, -0.5])
    cands = sample_candidates(oracle, sched, mod, x_tau, 2, grid, 4, rng,
                              ds.x_star[0], cond=ds.y[0])
    assert len(cands) == 4
    for c in cands:
        assert np.array_equal(c.times, grid.times[2:])
        assert np.array_equal(c.states[0], x_tau)
        assert c.gammas.shape == (4,)
        assert np.all(c.gammas > 0)
    again = sample_candidates(oracle, sched, mod, x_tau, 2, grid, 4, rng,
                              ds.x_star[0], cond=ds.y[0])
    for a, b in zip(cands, again):
        assert np.array_equal(a.states, b.states)


def test_gamma_override_zero_is_deterministic():
    sched, ds, oracle, mod = _fresh_setup()
    grid = make_grid(sched, 6)
    cands = sample_candidates(oracle, sched, mod, np.array([0.3, -0.5]), 3,
                              grid, 2, CounterRng(0), ds.x_star[0],
                              cond=ds.y[0], gamma_override=0.0)
    assert np.array_equal(cands[0].states, cands[1].states)
    assert np.all(cands[0].gammas == 0.0)


def test_align_config_validation():
    with pytest.raises(ConfigError):
        AlignConfig(n_candidates=1)
    with pytest.raises(ConfigError):
        AlignConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        AlignConfig(tau_sampling="sobol")


def _run_steps(seed, n_iters, cfg=None):
    sched, ds, oracle, mod = _fresh_setup(seed)
    cfg = cfg or AlignConfig(n_candidates=4, steps=6, iterations=n_iters)
    state = AlignState(opt_theta=Adam(oracle.net.n_params, lr=cfg.learning_rate),
                       opt_psi=Adam(mod.net.n_params, lr=cfg.psi_learning_rate))
    metrics = [align_step(oracle, mod, ds.x_star[i % len(ds)],
                          ds.y[i % len(ds)], sched, cfg, seed, i, state)
               for i in range(n_iters)]
    return metrics, oracle, mod


def test_align_step_metrics_and_determinism():
    a, oracle_a, mod_a = _run_steps(0, 3)
    b, oracle_b, mod_b = _run_steps(0, 3)
    for ma, mb in zip(a, b):
        assert ma == mb
        for key in ("iteration", "loss", "reward_best", "reward_mean",
                    "gamma_mean"):
            assert key in ma
        assert np.isfinite(ma["loss"])
    assert np.array_equal(oracle_a.net.theta, oracle_b.net.theta)
    assert np.array_equal(mod_a.net.theta, mod_b.net.theta)


def test_align_step_updates_both_parameter_sets():
    sched, ds, oracle, mod = _fresh_setup()
    theta0, psi0 = oracle.net.theta.copy(), mod.net.theta.copy()
    cfg = AlignConfig(n_candidates=4, steps=6, iterations=1)
    state = AlignState(opt_theta=Adam(oracle.net.n_params, lr=1e-3),
                       opt_psi=Adam(mod.net.n_params, lr=1e-3))
    changed_psi = False
    for i in range(4):
        align_step(oracle, mod, ds.x_star[i], ds.y[i], sched, cfg, 0, i, state)
        changed_psi = changed_psi or not np.array_equal(mod.net.theta, psi0)
    assert not np.array_equal(oracle.net.theta, theta0)
    assert changed_psi
