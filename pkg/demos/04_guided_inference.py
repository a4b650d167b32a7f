"""Negative guidance at inference time, on a fully analytic setup.

Few-step restoration starts the reverse chain from an interpolation of
the degraded input y instead of pure noise. That keeps structure from y
— including its degradation. Negative guidance counteracts the pull:
the ε-prediction is extrapolated away from the noise estimate ε̃ that
would make the chain land exactly on y,

    ε̂ = (1 + w) ε_θ − w ε̃.

This demo isolates the mechanism with an exact Gaussian oracle: as w
grows, reconstructions move measurably away from the degraded inputs.
Because the analytic oracle is unconditional, it cannot replace the
removed y-structure with anything sample-specific — pushing away from y
drifts toward the data prior, so per-sample fidelity does not improve
here. The payoff of guidance comes in the trained pipeline (demo 03),
where a conditional student is distilled *with* guidance in the loop and
ends up both away from y and close to x*.

Run:  python demos/04_guided_inference.py
"""

import numpy as np

from trajkit import CounterRng, DegradationOp, GaussianOracle, infer, vp_default

sched = vp_default()
oracle = GaussianOracle([2.0, 2.0], 1.0)
op = DegradationOp.scaling(0.7)

rng_data = np.random.default_rng(0)
x_star = rng_data.standard_normal((128, 2)) + np.array([2.0, 2.0])
y = x_star @ op.matrix.T
prior_mean = np.array([2.0, 2.0])

print("5-step guided inference from an interpolated start (unconditional "
      "analytic oracle)")
print(f"{'w':>6} {'MSE vs y':>10} {'MSE vs x*':>10} {'MSE vs prior':>13}")
for w in (0.0, 0.05, 0.1, 0.2, 0.4):
    to_y, to_x, to_mu = [], [], []
    for i in range(len(y)):
        rng = CounterRng(0, stream=1000 + i)
        x_hat, _ = infer(oracle, sched, y[i], k=5, w=w, rng=rng)
        to_y.append(np.mean((x_hat - y[i]) ** 2))
        to_x.append(np.mean((x_hat - x_star[i]) ** 2))
        to_mu.append(np.mean((x_hat - prior_mean) ** 2))
    print(f"{w:6.2f} {np.mean(to_y):10.4f} {np.mean(to_x):10.4f} "
          f"{np.mean(to_mu):13.4f}")

print("\nGrowing w pushes reconstructions away from the degraded inputs "
      "(first column\nrises); with nothing sample-specific to anchor them, "
      "they overshoot the prior too.")
