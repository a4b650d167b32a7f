"""Best-of-N trajectory alignment on a toy ring-restoration task.

Setup: clean samples live on a unit ring, observations are scaled down
by 0.7 with a little noise. A small conditional denoiser is pretrained
the ordinary way, then aligned: at a random switch time the sampler
branches into N stochastic candidates, the best endpoint (by reward)
becomes the regression target for the deterministic trajectory, and a
learned modulator decides how much noise to inject where.

Run:  python demos/02_best_of_n_alignment.py        (about a minute)
"""

import numpy as np

from trajkit import (AlignConfig, CounterRng, DPM1, DegradationOp,
                     GammaModulator, NetOracle, align_train, gen_dataset,
                     integrate, make_grid, train_denoiser, vp_default)

SEED = 0
sched = vp_default()
op = DegradationOp.scaling(0.7, noise_std=0.05)
train_ds = gen_dataset("ring", 512, op, SEED)
test_ds = gen_dataset("ring", 128, op, 1000 + SEED)


def sampler_mse(oracle, steps=10):
    """Test MSE of the 10-step deterministic conditional sampler."""
    rng = CounterRng(SEED, stream=900000)
    x0 = rng.normal(0, len(test_ds), 2)
    grid = make_grid(sched, steps)
    errs = []
    for i in range(len(test_ds)):
        traj = integrate(DPM1, sched, oracle, grid, x0[i], cond=test_ds.y[i])
        errs.append(np.mean((traj.endpoint - test_ds.x_star[i]) ** 2))
    return float(np.mean(errs))


# 1. Pretrain. The oracle is an analytic Gaussian prior plus a learned
# correction, so the extreme high-noise regime is handled exactly.
oracle = NetOracle(2, cond_dim=2, seed=SEED, base_scale=np.sqrt(0.5))
losses = train_denoiser(oracle, train_ds, sched, steps=3000, seed=SEED)
print(f"pretraining loss: {losses[0]:.4f} -> {np.mean(losses[-100:]):.4f}")
pre = sampler_mse(oracle)
print(f"10-step sampler MSE before alignment: {pre:.5f}")

# 2. Align. 8 candidates per iteration, modulator-chosen noise with
# per-candidate jitter, winner selected by negative MSE.
mod = GammaModulator(seed=SEED)
cfg = AlignConfig(iterations=800, learning_rate=1e-4, anchor_weight=1.0)
log = align_train(oracle, mod, train_ds, sched, cfg, seed=SEED)

post = sampler_mse(oracle)
rb0 = np.mean([m["reward_best"] for m in log[:100]])
rb1 = np.mean([m["reward_best"] for m in log[-100:]])
gm = np.mean([m["gamma_mean"] for m in log[-100:]])
print(f"10-step sampler MSE after alignment:  {post:.5f} "
      f"({'improved' if post < pre else 'regressed'})")
print(f"best-candidate reward: {rb0:.4f} -> {rb1:.4f}")
print(f"modulator gamma, last 100 iterations: {gm:.3f}")
