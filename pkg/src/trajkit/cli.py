"""Command-line front end: sample, align, distill, cost, verify.

All commands read a TOML run config; --seed and --out override the
config's seed and output directory. Failures map to process exit codes
through the error hierarchy: 2 config, 3 numerics, 4 missing artifact,
5 checkpoint.

Sampling parallelizes over trajectory chunks with up to TRAJKIT_THREADS
worker threads; the counter-based RNG addresses noise by trajectory row,
so the dumped output is byte-identical for any thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .align import AlignConfig, GammaModulator, align_train
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, dump_config, load_config
from .distill import (CostReport, DistillConfig, distill_train, resolve_delta,
                      trajectory_cost, write_cost_report)
from .errors import ConfigError, TrajkitError
from .integrator import (RF_ODE, RF_SDE, SOLVER_KINDS, Trajectory,
                         dump_trajectories, integrate)
from .oracle import (GaussianOracle, MixtureOracle, NetOracle, train_denoiser)
from .rng import CounterRng
from .schedule import NoiseSchedule, TimeGrid, make_grid
from .task import DegradationOp, DivergenceSpec, RewardSpec, gen_dataset
from .verify import run_all_checks

THREADS_ENV = "TRAJKIT_THREADS"


# ---------------------------------------------------------------------------
# construction from config
# ---------------------------------------------------------------------------

def build_schedule(cfg: RunConfig) -> NoiseSchedule:
    sc = cfg.schedule
    return NoiseSchedule(kind=sc.kind, t_min=sc.t_min, t_max=sc.t_max,
                         lambda_max=sc.lambda_max, lambda_min=sc.lambda_min,
                         sigma_min=sc.sigma_min, sigma_max=sc.sigma_max)


def build_oracle(cfg: RunConfig):
    oc = cfg.oracle
    if oc.type == "gaussian":
        mean = oc.mean if oc.mean else [0.0] * oc.dim
        return GaussianOracle(mean, oc.scale)
    if oc.type == "mixture":
        return MixtureOracle(oc.weights, oc.means, oc.scales)
    if oc.type == "net":
        return NetOracle(
            oc.dim,
            cond_dim=oc.dim if oc.conditional else 0,
            hidden=tuple(oc.hidden),
            seed=cfg.seed,
            base_scale=oc.base_scale if oc.base_scale > 0 else None,
        )
    raise ConfigError(f"unknown oracle type {oc.type!r}")


def build_dataset(cfg: RunConfig, test: bool = False):
    tc = cfg.task
    op = DegradationOp.scaling(tc.scale, dim=cfg.oracle.dim,
                               noise_std=tc.noise_std)
    n = tc.test_n if test else tc.n
    return gen_dataset(tc.kind, n, op, cfg.seed + (1 if test else 0))


def _oracle_dim(cfg: RunConfig, oracle) -> int:
    return oracle.dim if hasattr(oracle, "dim") else cfg.oracle.dim


def _n_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def _prepare_out(cfg: RunConfig, out_dir: str | None) -> Path:
    path = Path(out_dir if out_dir is not None else cfg.output.dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.toml").write_text(dump_config(cfg), encoding="utf-8")
    return path


def _write_metrics(log, path, columns):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for rec in log:
            row = []
            for col in columns:
                v = rec.get(col, "")
                row.append(f"{v:.17g}" if isinstance(v, float) else str(v))
            fh.write("\t".join(row) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sample(cfg: RunConfig, out_dir: str | None) -> int:
    sched = build_schedule(cfg)
    oracle = build_oracle(cfg)
    sc = cfg.sample
    if sc.solver not in SOLVER_KINDS:
        raise ConfigError(f"unknown solver kind {sc.solver!r}")
    out = _prepare_out(cfg, out_dir)
    dim = _oracle_dim(cfg, oracle)
    grid = make_grid(sched, sc.steps)

    # Start from the prior: σ_T ε (α_T ≈ 0 for VP; exactly ε for RectFlow).
    _, sigma_hi = sched.alpha_sigma(sched.t_max)
    x0 = sigma_hi * CounterRng(cfg.seed, stream=0).normal(0, sc.n, dim)

    base_rng = CounterRng(cfg.seed, stream=1)
    n_threads = _n_threads()
    chunk = -(-sc.n // n_threads)
    bounds = [(lo, min(lo + chunk, sc.n)) for lo in range(0, sc.n, chunk)]

    def run_chunk(lo, hi):
        return integrate(
            sc.solver, sched, oracle, grid, x0[lo:hi],
            gammas=sc.gamma, alpha_mod=sc.alpha_mod,
            rng=base_rng.row_slice(lo), noise_variant=sc.noise_variant,
        )

    if n_threads == 1 or len(bounds) == 1:
        parts = [run_chunk(lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(lambda b: run_chunk(*b), bounds))
    states = np.concatenate([p.states for p in parts], axis=1)
    traj = Trajectory(times=grid.times.copy(), states=states,
                      solver=sc.solver, seed=cfg.seed, stream=1)
    dump_trajectories([traj], out / "trajectories.tsv")
    print(f"wrote {sc.n} trajectories ({sc.steps} steps, {sc.solver}) "
          f"to {out / 'trajectories.tsv'}")
    return 0


def _require_net(cfg: RunConfig, oracle, command: str) -> NetOracle:
    if not isinstance(oracle, NetOracle):
        raise ConfigError(
            f"{command} requires oracle.type = \"net\", got {cfg.oracle.type!r}"
        )
    return oracle


def _load_weights(oracle: NetOracle, mod: GammaModulator | None, path):
    ck = load_checkpoint(path)
    if "theta" not in ck.arrays:
        raise ConfigError(f"checkpoint {path} carries no oracle weights")
    oracle.net.set_theta(ck.arrays["theta"])
    if mod is not None and "psi" in ck.arrays:
        mod.net.set_theta(ck.arrays["psi"])
    return ck


def cmd_align(cfg: RunConfig, out_dir: str | None, resume: str | None) -> int:
    sched = build_schedule(cfg)
    oracle = _require_net(cfg, build_oracle(cfg), "align")
    mod = GammaModulator(seed=cfg.seed)
    dataset = build_dataset(cfg)
    out = _prepare_out(cfg, out_dir)

    if resume is not None:
        _load_weights(oracle, mod, resume)
    else:
        train_denoiser(oracle, dataset, sched, cfg.oracle.pretrain_steps,
                       lr=cfg.oracle.pretrain_lr,
                       batch_size=cfg.oracle.batch_size, seed=cfg.seed)
        save_checkpoint(Checkpoint(
            meta={"command": "pretrain"},
            arrays={"theta": oracle.net.theta},
            step=cfg.oracle.pretrain_steps,
            config_text=dump_config(cfg),
        ), out / "pretrained.ckpt")

    ac = cfg.align
    align_cfg = AlignConfig(
        n_candidates=ac.n_candidates,
        reward=RewardSpec(kind=ac.reward),
        divergence=DivergenceSpec(kind=ac.divergence),
        learning_rate=ac.learning_rate,
        psi_learning_rate=ac.psi_learning_rate,
        iterations=ac.iterations, steps=ac.steps,
        anchor_weight=ac.anchor_weight, gamma_jitter=ac.gamma_jitter,
    )
    log = align_train(oracle, mod, dataset, sched, align_cfg, seed=cfg.seed)
    save_checkpoint(Checkpoint(
        meta={"command": "align", "steps": ac.steps,
              "n_candidates": ac.n_candidates},
        arrays={"theta": oracle.net.theta, "psi": mod.net.theta},
        step=ac.iterations,
        config_text=dump_config(cfg),
    ), out / "aligned.ckpt")
    _write_metrics(log, out / "align_metrics.tsv",
                   ["iteration", "loss", "reward_best", "reward_mean",
                    "gamma_mean"])
    print(f"alignment finished: {ac.iterations} iterations, "
          f"checkpoint at {out / 'aligned.ckpt'}")
    return 0


def cmd_distill(cfg: RunConfig, out_dir: str | None, resume: str | None) -> int:
    sched = build_schedule(cfg)
    teacher = _require_net(cfg, build_oracle(cfg), "distill")
    dataset = build_dataset(cfg)
    out = _prepare_out(cfg, out_dir)

    if resume is not None:
        _load_weights(teacher, None, resume)
    else:
        train_denoiser(teacher, dataset, sched, cfg.oracle.pretrain_steps,
                       lr=cfg.oracle.pretrain_lr,
                       batch_size=cfg.oracle.batch_size, seed=cfg.seed)
    student = teacher.clone()

    dc = cfg.distill
    distill_cfg = DistillConfig(
        k=dc.k, delta=None if dc.delta < 0 else dc.delta, w=dc.w,
        teacher_steps=dc.teacher_steps, mix_ratio=dc.mix_ratio,
        learning_rate=dc.learning_rate, iterations=dc.iterations,
        snr_threshold=dc.snr_threshold, max_grad_norm=dc.max_grad_norm,
    )
    log = distill_train(student, teacher, dataset, sched, distill_cfg,
                        seed=cfg.seed)
    delta = resolve_delta(sched, distill_cfg)
    save_checkpoint(Checkpoint(
        meta={"command": "distill", "k": dc.k, "w": dc.w, "delta": delta},
        arrays={"theta": student.net.theta,
                "teacher_theta": teacher.net.theta},
        step=dc.iterations,
        config_text=dump_config(cfg),
    ), out / "distilled.ckpt")
    _write_metrics(log, out / "distill_metrics.tsv", ["iteration", "loss"])
    print(f"distillation finished: k={dc.k} w={dc.w} delta={delta:.6g}, "
          f"checkpoint at {out / 'distilled.ckpt'}")
    return 0


def cmd_cost(cfg: RunConfig, out_dir: str | None, ks: list[int]) -> int:
    sched = build_schedule(cfg)
    oracle = build_oracle(cfg)
    out = _prepare_out(cfg, out_dir)
    dim = _oracle_dim(cfg, oracle)
    dense_steps = cfg.distill.teacher_steps
    grid = make_grid(sched, dense_steps)

    alpha_hi, sigma_hi = sched.alpha_sigma(sched.t_max)
    eps = CounterRng(cfg.seed, stream=0).normal(0, cfg.sample.n, dim)
    if isinstance(oracle, GaussianOracle):
        std = np.sqrt(alpha_hi**2 * oracle.scale**2 + sigma_hi**2)
        x0 = alpha_hi * oracle.mean + std * eps
    else:
        x0 = sigma_hi * eps
    dense = integrate(cfg.sample.solver if cfg.sample.solver != RF_SDE
                      else RF_ODE, sched, oracle, grid, x0)

    for k in ks:
        if k < 1 or dense_steps % k != 0:
            raise ConfigError(
                f"sparse step count {k} must divide the dense step count "
                f"{dense_steps}"
            )
        sparse = TimeGrid(times=grid.times[::dense_steps // k],
                          spacing=grid.spacing)
        per_step = []
        for i in range(cfg.sample.n):
            single = Trajectory(times=dense.times,
                                states=dense.states[:, i, :],
                                solver=dense.solver)
            per_step.append(trajectory_cost(single, sparse, oracle, sched)
                            .per_step_costs)
        mean_steps = np.mean(per_step, axis=0)
        report = CostReport(per_step_costs=mean_steps,
                            total=float(np.sum(mean_steps)), k=k, grid=sparse)
        write_cost_report(report, out / f"cost_k{k}.tsv")
        print(f"k={k}\ttotal={report.total:.17g}")
    return 0


def cmd_verify(cfg: RunConfig, out_dir: str | None) -> int:
    out = _prepare_out(cfg, out_dir)
    records = run_all_checks()
    lines = ["id\tstatus\tvalue\tthreshold"]
    for rec in records:
        status = "pass" if rec["passed"] else "fail"
        lines.append(f"{rec['id']}\t{status}\t{rec['value']:.17g}\t"
                     f"{rec['threshold']:.17g}")
    report = "\n".join(lines) + "\n"
    (out / "verify_report.tsv").write_text(report, encoding="utf-8")
    sys.stdout.write(report)
    return 0 if all(r["passed"] for r in records) else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parse_k_list(raw: str) -> list[int]:
    try:
        ks = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--k must be a comma-separated integer list, "
                          f"got {raw!r}") from exc
    if not ks:
        raise ConfigError("--k list is empty")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajkit",
        description="Diffusion-trajectory toolkit: sampling, alignment, "
                    "distillation, cost analysis, self-verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None,
                       help="override the output directory")

    p = sub.add_parser("sample", help="integrate trajectories and dump them")
    common(p)
    p.add_argument("--solver", default=None, choices=SOLVER_KINDS)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)

    p = sub.add_parser("align", help="best-of-N trajectory alignment")
    common(p)
    p.add_argument("--resume", default=None,
                   help="checkpoint with pretrained weights")

    p = sub.add_parser("distill", help="cost-aware trajectory distillation")
    common(p)
    p.add_argument("--resume", default=None,
                   help="checkpoint with pretrained teacher weights")

    p = sub.add_parser("cost", help="distillation-cost analysis")
    common(p)
    p.add_argument("--k", default="1,2,4,5,8,10",
                   help="comma-separated sparse step counts")

    p = sub.add_parser("verify", help="run the property-check registry")
    common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "sample":
            if args.solver is not None:
                cfg.sample.solver = args.solver
            if args.steps is not None:
                cfg.sample.steps = args.steps
            if args.n is not None:
                cfg.sample.n = args.n
            if args.gamma is not None:
                cfg.sample.gamma = args.gamma
            return cmd_sample(cfg, args.out)
        if args.command == "align":
            return cmd_align(cfg, args.out, args.resume)
        if args.command == "distill":
            return cmd_distill(cfg, args.out, args.resume)
        if args.command == "cost":
            return cmd_cost(cfg, args.out, _parse_k_list(args.k))
        return cmd_verify(cfg, args.out)
    except TrajkitError as exc:
        print(f"trajkit: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
