"""Oracle tests: frozen ε values, score identity, network plumbing."""

import numpy as np
import pytest

from trajkit.errors import ConfigError
from trajkit.oracle import (GaussianOracle, MixtureOracle, NetOracle,
                            train_denoiser)
from trajkit.schedule import rectflow_default, vp_default, make_grid, TimeGrid
from trajkit.integrator import integrate, RF_ODE
from trajkit.task import DegradationOp, gen_dataset
from trajkit.rng import CounterRng
from trajkit import verify

# Quad-precision reference: ε of N((2,2), 1.3² I) at x=(1.1, 0.2), t=0.35
# on the default VP schedule.
GAUSS_EPS_REF = np.array([-0.02609514099343395154, -0.052260367194323416447])


def test_gaussian_eps_frozen():
    oracle = GaussianOracle([2.0, 2.0], 1.3)
    eps = oracle.eps(vp_default(), np.array([1.1, 0.2]), 0.35)
    assert np.max(np.abs(eps - GAUSS_EPS_REF)) < 1e-15


def test_score_identity():
    rec = verify.check_score_identity()
    assert rec["passed"], rec


def test_single_component_mixture_matches_gaussian():
    sched = vp_default()
    g = GaussianOracle([0.5, -1.0], 0.8)
    m = MixtureOracle([1.0], [[0.5, -1.0]], [0.8])
    x = np.random.default_rng(0).standard_normal((6, 2))
    assert np.allclose(g.eps(sched, x, 0.4), m.eps(sched, x, 0.4), atol=1e-12)
    rf = rectflow_default()
    assert np.allclose(g.velocity(rf, x, 0.4), m.velocity(rf, x, 0.4),
                       atol=1e-12)


def test_mixture_validation():
    with pytest.raises(ConfigError):
        MixtureOracle([0.5, 0.4], [[0, 0], [1, 1]], [1.0, 1.0])
    with pytest.raises(ConfigError):
        MixtureOracle([0.5, 0.5], [[0, 0], [1, 1]], [1.0, -1.0])
    with pytest.raises(ConfigError):
        MixtureOracle([1.0], [[0, 0], [1, 1]], [1.0])


def test_velocity_field_transports_noise_to_data():
    """Euler on dX/dt = v from t=1 must land on the data distribution."""
    sched = rectflow_default()
    oracle = GaussianOracle([2.0, -1.0], 1.5)
    noise = CounterRng(1).normal(0, 4000, 2)
    grid = TimeGrid(times=np.linspace(1.0, 0.002, 101), spacing="uniform-t")
    end = integrate(RF_ODE, sched, oracle, grid, noise).endpoint
    assert np.max(np.abs(end.mean(axis=0) - [2.0, -1.0])) < 0.12
    assert np.max(np.abs(end.std(axis=0) - 1.5)) < 0.12


def test_velocity_requires_rectflow():
    with pytest.raises(ConfigError):
        GaussianOracle([0.0, 0.0]).velocity(vp_default(), np.zeros(2), 0.4)


def test_net_oracle_feature_checks():
    oracle = NetOracle(2, cond_dim=2, hidden=(8,), seed=0)
    sched = vp_default()
    with pytest.raises(ConfigError):
        oracle.eps(sched, np.zeros((1, 2)), 0.5)          # missing cond
    with pytest.raises(ConfigError):
        oracle.eps(sched, np.zeros((1, 3)), 0.5, np.zeros((1, 2)))


def test_net_oracle_base_prior():
    sched = vp_default()
    base = GaussianOracle([0.0, 0.0], 0.7)
    oracle = NetOracle(2, hidden=(8,), seed=0, base_scale=0.7)
    x = np.random.default_rng(1).standard_normal((4, 2))
    # Fresh net outputs zero, so the prediction is exactly the prior ε.
    assert np.allclose(oracle.eps(sched, x, 0.35), base.eps(sched, x, 0.35),
                       atol=1e-15)
    alpha, sigma = sched.alpha_sigma(0.35)
    expect = float(sigma / (alpha**2 * 0.49 + sigma**2))
    assert oracle.base_coeff(sched, 0.35) == pytest.approx(expect, abs=1e-15)
    assert NetOracle(2, hidden=(8,), seed=0).base_coeff(sched, 0.35) == 0.0


def test_net_oracle_backprop_grad_x():
    sched = vp_default()
    rng = np.random.default_rng(2)
    oracle = NetOracle(2, hidden=(8,), seed=0, base_scale=0.7)
    oracle.net.set_theta(rng.standard_normal(oracle.net.n_params) * 0.3)
    x = rng.standard_normal((1, 2))
    u = rng.standard_normal((1, 2))
    _, tape = oracle.eps_with_tape(sched, x, 0.4)
    _, gx = oracle.backprop(tape, u)
    # Full state Jacobian = net part (from the tape) + prior base_coeff.
    b = oracle.base_coeff(sched, 0.4)
    h = 1e-6
    for j in range(2):
        xp, xm = x.copy(), x.copy()
        xp[0, j] += h
        xm[0, j] -= h
        fd = (np.sum(oracle.eps(sched, xp, 0.4) * u)
              - np.sum(oracle.eps(sched, xm, 0.4) * u)) / (2 * h)
        assert abs(fd - (gx[0, j] + b * u[0, j])) < 1e-6


def test_clone_is_independent():
    oracle = NetOracle(2, cond_dim=2, hidden=(8,), seed=3, base_scale=0.7)
    copy = oracle.clone()
    assert np.array_equal(copy.net.theta, oracle.net.theta)
    copy.net.set_theta(copy.net.theta + 1.0)
    assert not np.array_equal(copy.net.theta, oracle.net.theta)
    assert copy.base.scale == oracle.base.scale


def test_train_denoiser_reduces_loss():
    sched = vp_default()
    ds = gen_dataset("gaussian_shift", 256, DegradationOp.scaling(0.7), 0)
    oracle = NetOracle(2, cond_dim=2, hidden=(16, 16), seed=0,
                       base_scale=1.0)
    losses = train_denoiser(oracle, ds, sched, steps=400, seed=0)
    assert len(losses) == 400
    assert np.mean(losses[-50:]) < np.mean(losses[:50])
