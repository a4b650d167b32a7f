"""Executable property suite: every structural invariant and statistical
check, runnable standalone (cmd_verify) and reused by the tests.

Each check returns a record dict:
    {"id", "passed", "value", "threshold"}
where value is the measured quantity compared against threshold.
"""

from __future__ import annotations

import numpy as np

from .align import GammaModulator, gamma_eval
from .distill import (DistillConfig, default_delta, eps_check, eps_tilde,
                      error_ratio_probe, guided_eps, infer, trajectory_cost)
from .integrator import (DPM1, MSDE_VP, dpm1_step, integrate, msde_ve_step,
                         msde_vp_step, rf_beta, rf_ode_step, rf_sde_step)
from .nn import MicroNet
from .oracle import GaussianOracle, MixtureOracle
from .rng import CounterRng
from .schedule import (NoiseSchedule, TimeGrid, drift_diffusion, make_grid,
                       rectflow_default, ve_default, vp_default)
from .stats import energy_distance_test
from .task import DegradationOp


def _record(check_id, value, threshold, passed=None):
    if passed is None:
        passed = bool(value <= threshold)
    return {"id": check_id, "passed": bool(passed), "value": float(value),
            "threshold": float(threshold)}


# -- schedule ---------------------------------------------------------------

def check_vp_identity(seed=0):
    sched = vp_default()
    rng = np.random.default_rng(seed)
    t = rng.uniform(sched.t_min, sched.t_max, 1000)
    alpha, sigma = sched.alpha_sigma(t)
    worst = float(np.max(np.abs(alpha**2 + sigma**2 - 1.0)))
    return _record("schedule.vp_identity", worst, 1e-12)


def check_lambda_monotone(seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    for sched in (vp_default(), ve_default()):
        t = np.sort(rng.uniform(sched.t_min, sched.t_max, 500))
        lam = sched.lam(t)
        bad += int(np.sum(np.diff(lam) >= 0))
    return _record("schedule.lambda_monotone", bad, 0)


def check_drift_finite_difference(seed=0):
    h = 1e-6
    worst = 0.0
    rng = np.random.default_rng(seed)
    for sched in (vp_default(), ve_default()):
        t = rng.uniform(sched.t_min + 2 * h, sched.t_max - 2 * h, 100)
        f_coeff, g_sq = drift_diffusion(sched, t)
        la_p = np.log(sched.alpha_sigma(t + h)[0])
        la_m = np.log(sched.alpha_sigma(t - h)[0])
        f_fd = (la_p - la_m) / (2 * h)
        s_p = sched.alpha_sigma(t + h)[1] ** 2
        s_m = sched.alpha_sigma(t - h)[1] ** 2
        g_fd = (s_p - s_m) / (2 * h) - 2 * f_fd * sched.alpha_sigma(t)[1] ** 2
        scale_f = np.maximum(np.abs(f_fd), 1e-3)
        scale_g = np.maximum(np.abs(g_fd), 1e-3)
        worst = max(worst,
                    float(np.max(np.abs(f_coeff - f_fd) / scale_f)),
                    float(np.max(np.abs(g_sq - g_fd) / scale_g)))
    return _record("schedule.drift_finite_difference", worst, 1e-6)


# -- oracles ----------------------------------------------------------------

def _log_density_gaussian(oracle, sched, x, t):
    alpha, sigma = sched.alpha_sigma(t)
    var = alpha**2 * oracle.scale**2 + sigma**2
    return -0.5 * np.sum((x - alpha * oracle.mean) ** 2) / var


def _log_density_mixture(oracle, sched, x, t):
    alpha, sigma = sched.alpha_sigma(t)
    var = alpha**2 * oracle.scales**2 + sigma**2
    sq = np.sum((x[None] - alpha * oracle.means) ** 2, axis=1)
    logs = np.log(oracle.weights) - 0.5 * len(x) * np.log(var) - 0.5 * sq / var
    m = np.max(logs)
    return float(m + np.log(np.sum(np.exp(logs - m))))


def check_score_identity(seed=0, n_points=100):
    """ε = −σ ∇log q via central differences of the log density."""
    rng = np.random.default_rng(seed)
    sched = vp_default()
    gauss = GaussianOracle([0.5, -0.3], 1.3)
    mix = MixtureOracle([0.5, 0.3, 0.2],
                        [[1.0, 0.0], [-1.0, 1.0], [0.0, -1.5]],
                        [0.8, 1.2, 0.6])
    h = 1e-6
    worst = 0.0
    for oracle, logq in ((gauss, _log_density_gaussian),
                         (mix, _log_density_mixture)):
        for _ in range(n_points):
            t = rng.uniform(0.2, 0.9)
            x = rng.standard_normal(2) * 1.5
            eps = oracle.eps(sched, x, t)
            sigma = sched.alpha_sigma(t)[1]
            grad = np.empty(2)
            for j in range(2):
                xp, xm = x.copy(), x.copy()
                xp[j] += h
                xm[j] -= h
                grad[j] = (logq(oracle, sched, xp, t)
                           - logq(oracle, sched, xm, t)) / (2 * h)
            ref = -sigma * grad
            rel = np.linalg.norm(eps - ref) / max(np.linalg.norm(ref), 1e-6)
            worst = max(worst, float(rel))
    return _record("oracle.score_identity", worst, 1e-5)


def check_gradient_integrity(seed=0, n_cases=20):
    """Reverse-mode gradients vs central finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    h = 1e-5
    for case in range(n_cases):
        widths = [int(rng.integers(2, 6)), int(rng.integers(4, 24)),
                  int(rng.integers(2, 5))]
        net = MicroNet(widths)
        net.set_theta(rng.standard_normal(net.n_params) * 0.5)
        x = rng.standard_normal((3, widths[0]))
        u = rng.standard_normal((3, widths[-1]))
        out, tape = net.forward(x, train=True)
        gt, gx = net.backward(tape, u)

        def value(theta=None, xx=None):
            probe = MicroNet(widths)
            probe.set_theta(net.theta if theta is None else theta)
            return float(np.sum(probe.forward(x if xx is None else xx) * u))

        idx = rng.choice(net.n_params, min(12, net.n_params), replace=False)
        for i in idx:
            tp = net.theta.copy()
            tp[i] += h
            tm = net.theta.copy()
            tm[i] -= h
            fd = (value(theta=tp) - value(theta=tm)) / (2 * h)
            worst = max(worst, abs(fd - gt[i]) / max(abs(fd), 1e-4))
        for _ in range(6):
            a, b = rng.integers(0, 3), rng.integers(0, widths[0])
            xp, xm = x.copy(), x.copy()
            xp[a, b] += h
            xm[a, b] -= h
            fd = (value(xx=xp) - value(xx=xm)) / (2 * h)
            worst = max(worst, abs(fd - gx[a, b]) / max(abs(fd), 1e-4))
    mod = GammaModulator(seed=seed)
    mod.net.set_theta(rng.standard_normal(mod.net.n_params) * 0.3)
    for _ in range(5):
        err, t = float(rng.uniform(0, 3)), float(rng.uniform(0, 1))
        feats = np.array([[err, t]])
        raw, tape = mod.net.forward(feats, train=True)
        sig = 1.0 / (1.0 + np.exp(-raw))
        gpsi, _ = mod.net.backward(tape, sig)
        idx = rng.choice(mod.net.n_params, 10, replace=False)
        for i in idx:
            tp = mod.net.theta.copy()
            tp[i] += h
            tm = mod.net.theta.copy()
            tm[i] -= h
            probe = GammaModulator()
            probe.net.set_theta(tp)
            gp = float(gamma_eval(probe, err, t))
            probe.net.set_theta(tm)
            gm = float(gamma_eval(probe, err, t))
            fd = (gp - gm) / (2 * h)
            worst = max(worst, abs(fd - gpsi[i]) / max(abs(fd), 1e-4))
    return _record("oracle.gradient_integrity", worst, 1e-4)


# -- integrator -------------------------------------------------------------

def check_gamma0_degeneration(seed=0, n=1000):
    sched = vp_default()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        t = rng.uniform(0.3, 1.0)
        t_prev = t - rng.uniform(0.01, 0.2)
        x = rng.standard_normal(2)
        e = rng.standard_normal(2)
        a = dpm1_step(sched, x, t, t_prev, e)
        b = msde_vp_step(sched, x, t, t_prev, e, 0.0)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return _record("integrator.gamma0_degeneration", worst, 1e-12)


def check_rf_degeneration(seed=0, n=1000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        t = rng.uniform(0.1, 0.99)
        dt = rng.uniform(1e-3, min(0.05, t * 0.9))
        x = rng.standard_normal(2)
        v = rng.standard_normal(2)
        a = rf_ode_step(x, t, t - dt, v)
        b = rf_sde_step(x, t, dt, v, 1.0)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return _record("integrator.rf_degeneration", worst, 1e-12)


def check_beta_asymptotic():
    dt = 1e-4
    worst = 0.0
    for alpha_mod in (1.5, 2.0, 4.0):
        target = np.sqrt(2.0 * (alpha_mod - 1.0))
        got = rf_beta(0.5, dt, alpha_mod) / np.sqrt(dt)
        worst = max(worst, abs(got - target) / target)
    return _record("integrator.beta_asymptotic", worst, 1e-3)


def check_ve_telescoping(seed=0):
    sched = ve_default()
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(2)
    eps = rng.standard_normal(2)
    grid = make_grid(sched, 17)
    cur = x.copy()
    for i in range(grid.n_steps):
        cur = msde_ve_step(sched, cur, float(grid.times[i]),
                           float(grid.times[i + 1]), eps, 0.0)
    sig_hi = sched.alpha_sigma(sched.t_max)[1]
    sig_lo = sched.alpha_sigma(sched.t_min)[1]
    expect = x - eps * (sig_hi - sig_lo)
    worst = float(np.max(np.abs(cur - expect)))
    return _record("integrator.ve_telescoping", worst, 1e-10)


def check_marginal_preservation(n_traj=50000, steps=200, seed=7,
                                lambda_range=6.0):
    """Modulated-SDE endpoint clouds vs the closed-form Gaussian marginal."""
    sched = NoiseSchedule(kind="VP", lambda_max=lambda_range,
                          lambda_min=-lambda_range)
    oracle = GaussianOracle([0.0, 0.0], 1.0)
    grid = make_grid(sched, steps)
    a0, s0 = sched.alpha_sigma(sched.t_min)
    cov_true = np.eye(2) * (a0**2 + s0**2)
    rng = CounterRng(seed)
    x0 = rng.normal(999, n_traj, 2)
    worst_frob, worst_z = 0.0, 0.0
    for gi, gamma in enumerate((0.0, 0.5, 1.0)):
        traj = integrate(MSDE_VP, sched, oracle, grid, x0, gammas=gamma,
                         rng=rng.substream(gi + 1))
        end = traj.endpoint
        cov = np.cov(end.T)
        worst_frob = max(worst_frob, float(
            np.linalg.norm(cov - cov_true) / np.linalg.norm(cov_true)))
        z = np.abs(end.mean(axis=0)) / (end.std(axis=0) / np.sqrt(n_traj))
        worst_z = max(worst_z, float(np.max(z)))
    rec = _record("integrator.marginal_preservation", worst_frob, 0.05)
    rec["passed"] = rec["passed"] and worst_z < 4.0
    rec["mean_z"] = worst_z
    return rec


def check_rf_equivalence(n=20000, steps=200, alpha_mod=1.5,
                         n_permutations=100, seed=3):
    """Stochastic and deterministic rectified-flow endpoint clouds agree."""
    sched = rectflow_default()
    oracle = GaussianOracle([2.0, 2.0], 1.0)
    rng = CounterRng(seed, stream=1)
    noise = rng.normal(0, n, 2)
    # End above (alpha_mod − 1)·dt so every stochastic step is valid.
    t_end = 0.005
    times = np.linspace(1.0, t_end, steps + 1)
    grid = TimeGrid(times=times, spacing="uniform-t")
    ode = integrate("rf_ode", sched, oracle, grid, noise)
    sde = integrate("rf_sde", sched, oracle, grid, noise,
                    alpha_mod=alpha_mod, rng=rng.substream(2))
    res = energy_distance_test(ode.endpoint, sde.endpoint,
                               n_permutations=n_permutations, seed=seed)
    rec = _record("integrator.rf_equivalence", res.statistic, res.threshold,
                  passed=not res.rejected)
    rec["p_value"] = res.p_value
    return rec


def check_determinism(seed=5):
    sched = vp_default()
    oracle = GaussianOracle([0.0, 0.0], 1.0)
    grid = make_grid(sched, 25)
    rng = CounterRng(seed)
    x0 = rng.normal(999, 64, 2)
    a = integrate(MSDE_VP, sched, oracle, grid, x0, gammas=0.7,
                  rng=CounterRng(seed, 1))
    b = integrate(MSDE_VP, sched, oracle, grid, x0, gammas=0.7,
                  rng=CounterRng(seed, 1))
    chunks = []
    for lo in range(0, 64, 16):
        sub = integrate(MSDE_VP, sched, oracle, grid, x0[lo:lo + 16],
                        gammas=0.7, rng=CounterRng(seed, 1).row_slice(lo))
        chunks.append(sub.states)
    c = np.concatenate(chunks, axis=1)
    same = np.array_equal(a.states, b.states) and np.array_equal(a.states, c)
    return _record("integrator.determinism", 0.0 if same else 1.0, 0.0)


# -- distillation -----------------------------------------------------------

def check_guided_affine(seed=0):
    rng = np.random.default_rng(seed)
    e1, e2 = rng.standard_normal(2), rng.standard_normal(2)
    worst = 0.0
    for w1, w2 in ((0.0, 0.2), (0.05, 0.1), (-0.3, 0.7)):
        lhs = guided_eps(e1, e2, w1) + guided_eps(e1, e2, w2)
        rhs = 2.0 * guided_eps(e1, e2, (w1 + w2) / 2.0)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return _record("distill.guided_affine", worst, 1e-14)


def check_eps_check_inversion(seed=0, n=200):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for sched in (vp_default(), ve_default()):
        for _ in range(n):
            t = rng.uniform(0.3, 1.0)
            t_prev = t - rng.uniform(0.02, 0.25)
            x = rng.standard_normal(2)
            e = rng.standard_normal(2)
            if sched.kind == "VE":
                x_prev = msde_ve_step(sched, x, t, t_prev, e, 0.0)
            else:
                x_prev = dpm1_step(sched, x, t, t_prev, e)
            back = eps_check(sched, x_prev, x, t_prev, t)
            worst = max(worst, float(np.max(np.abs(back - e))))
    return _record("distill.eps_check_inversion", worst, 1e-10)


def cost_toy_schedule() -> NoiseSchedule:
    """Schedule of the distillation-cost toy: a mild VP log-SNR range so
    the ε-field varies along the whole trajectory."""
    return NoiseSchedule(kind="VP", lambda_max=4.0, lambda_min=-4.0)


def cost_toy_oracle() -> GaussianOracle:
    """Broad Gaussian data, mimicking the high-dimensional image regime
    where the data scale dwarfs the terminal signal level."""
    return GaussianOracle([2.0, 2.0], 55.0)


def cost_curve(ks=(1, 2, 4, 5, 8, 10), dense_steps=40, n_samples=16,
               seed=3):
    """Mean total distillation cost per sparse step count k."""
    sched = cost_toy_schedule()
    oracle = cost_toy_oracle()
    grid = make_grid(sched, dense_steps)
    rng = CounterRng(seed)
    a_hi, s_hi = sched.alpha_sigma(sched.t_max)
    std = np.sqrt(a_hi**2 * oracle.scale**2 + s_hi**2)
    x0 = a_hi * np.asarray(oracle.mean) + std * rng.normal(0, n_samples, 2)
    dense = integrate(DPM1, sched, oracle, grid, x0)
    totals, per_step = {}, {}
    for k in ks:
        stride = dense_steps // k
        sparse = TimeGrid(times=grid.times[::stride], spacing=grid.spacing)
        sample_totals, sample_steps = [], []
        for i in range(n_samples):
            single = type(dense)(times=dense.times,
                                 states=dense.states[:, i, :],
                                 solver=dense.solver)
            rep = trajectory_cost(single, sparse, oracle, sched)
            sample_totals.append(rep.total)
            sample_steps.append(rep.per_step_costs)
        totals[k] = float(np.mean(sample_totals))
        per_step[k] = np.mean(sample_steps, axis=0)
    return totals, per_step


def check_cost_trends():
    ks = (1, 2, 4, 5, 8, 10)
    totals, per_step = cost_curve(ks)
    vals = [totals[k] for k in ks]
    decreasing = all(vals[i + 1] <= vals[i] + 1e-9 for i in range(len(vals) - 1))
    dominance = bool(np.argmax(per_step[5]) == 0)
    worst_rise = max(vals[i + 1] - vals[i] for i in range(len(vals) - 1))
    rec = _record("distill.cost_trends", worst_rise, 0.0,
                  passed=decreasing and dominance)
    rec["totals"] = vals
    rec["first_step_share_k5"] = float(per_step[5][0] / max(totals[5], 1e-12))
    return rec


def check_error_ratio(seed=0):
    sched = vp_default()
    ratio, rel_shift = error_ratio_probe(sched, scale=0.7, n=1000, seed=seed)
    return _record("distill.error_ratio", ratio, rel_shift + 0.05)


def check_guidance_sweep(seed=0):
    """Inference stays finite and sane across the guidance sweep."""
    sched = vp_default()
    oracle = GaussianOracle([2.0, 2.0], 1.0)
    op = DegradationOp.scaling(0.7)
    rng_local = np.random.default_rng(seed)
    x_star = rng_local.standard_normal((32, 2)) + np.array([2.0, 2.0])
    y = x_star @ op.matrix.T
    worst = 0.0
    for wi, w in enumerate((0.0, 0.05, 0.1, 0.2)):
        errs = []
        for i in range(len(y)):
            rng = CounterRng(seed, stream=1000 * wi + i)
            xhat, _ = infer(oracle, sched, y[i], k=10, w=w, rng=rng)
            errs.append(np.mean((xhat - x_star[i]) ** 2))
        mse = float(np.mean(errs))
        if not np.isfinite(mse):
            return _record("distill.guidance_sweep", np.inf, 10.0)
        worst = max(worst, mse)
    return _record("distill.guidance_sweep", worst, 10.0)


ALL_CHECKS = (
    check_vp_identity,
    check_lambda_monotone,
    check_drift_finite_difference,
    check_score_identity,
    check_gradient_integrity,
    check_gamma0_degeneration,
    check_rf_degeneration,
    check_beta_asymptotic,
    check_ve_telescoping,
    check_marginal_preservation,
    check_rf_equivalence,
    check_determinism,
    check_guided_affine,
    check_eps_check_inversion,
    check_cost_trends,
    check_error_ratio,
    check_guidance_sweep,
)


def run_all_checks():
    """Execute the registry, returning one record per check."""
    return [fn() for fn in ALL_CHECKS]
