"""Distillation cost analysis and one-step student training.

Part A measures how hard it is to compress a dense teacher trajectory
onto k sparse steps: each sparse segment is inverted to the ε it would
need, and the mismatch against the teacher's ε-field is the per-step
cost. Totals shrink as k grows, and the first (highest-noise) step
dominates — the argument for starting the student closer to the data.

Part B trains two one-step students from a pretrained teacher: a plain
one (pure-noise start, no guidance) and an enhanced one (interpolated
start + negative guidance away from the degraded input).

Run:  python demos/03_cost_aware_distillation.py    (about a minute)
"""

import numpy as np

from trajkit import (CounterRng, DegradationOp, DistillConfig, NetOracle,
                     distill_train, gen_dataset, infer, train_denoiser,
                     vp_default)
from trajkit.distill import resolve_delta
from trajkit.verify import cost_curve

# ----------------------------------------------------------------------
# A. Cost versus sparse step count
# ----------------------------------------------------------------------
print("=== distillation cost on a 40-step teacher trajectory ===")
ks = (1, 2, 4, 5, 8, 10)
totals, per_step = cost_curve(ks)
for k in ks:
    print(f"k={k:2d}  total={totals[k]:10.4f}  "
          f"first-step share={per_step[k][0] / totals[k]:6.1%}")

# ----------------------------------------------------------------------
# B. One-step students on the ring-restoration task
# ----------------------------------------------------------------------
SEED = 0
sched = vp_default()
op = DegradationOp.scaling(0.7, noise_std=0.05)
train_ds = gen_dataset("ring", 512, op, SEED)
test_ds = gen_dataset("ring", 128, op, 1000 + SEED)

teacher = NetOracle(2, cond_dim=2, seed=SEED, base_scale=np.sqrt(0.5))
train_denoiser(teacher, train_ds, sched, steps=3000, seed=SEED)


def eval_mse(oracle, k, w, delta):
    errs = []
    for i in range(len(test_ds)):
        rng = CounterRng(SEED, stream=800000 + i)
        x_hat, _ = infer(oracle, sched, test_ds.y[i], k, w, rng, delta=delta)
        errs.append(np.mean((x_hat - test_ds.x_star[i]) ** 2))
    return float(np.mean(errs))


print("\n=== one-step students ===")
print(f"teacher used one-step (undistilled): "
      f"MSE {eval_mse(teacher, 1, 0.0, 0.0):.4g}")

base = teacher.clone()
distill_train(base, teacher, train_ds, sched,
              DistillConfig(k=1, delta=0.0, w=0.0, iterations=2000),
              seed=SEED)
print(f"base student (pure-noise start, no guidance): "
      f"MSE {eval_mse(base, 1, 0.0, 0.0):.4g}")

enhanced = teacher.clone()
cfg = DistillConfig(k=1, w=0.1, iterations=2000)
distill_train(enhanced, teacher, train_ds, sched, cfg, seed=SEED)
delta = resolve_delta(sched, cfg)
print(f"enhanced student (delta={delta:.4f}, w=0.1): "
      f"MSE {eval_mse(enhanced, 1, 0.1, delta):.4g}")
