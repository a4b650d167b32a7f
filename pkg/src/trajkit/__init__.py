"""trajkit: desk-scale diffusion-trajectory engine.

Modulated-SDE sampling with learned noise intensities, best-of-N
trajectory alignment of the deterministic sampler, and cost-aware
few-step distillation with interpolated starts and negative guidance —
all on analytic or micro-network oracles small enough to verify against
closed forms.
"""

from .align import (AlignConfig, AlignState, GammaModulator, align_step,
                    align_train, gamma_eval, sample_candidates, select_best)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, dump_config, load_config, parse_config
from .distill import (CostReport, DistillConfig, DistillState, default_delta,
                      distill_step, distill_train, eps_check, eps_tilde,
                      error_ratio_probe, guided_eps, infer, interp_init,
                      teacher_generate, trajectory_cost, write_cost_report)
from .errors import (CheckpointError, ConfigError, MissingArtifactError,
                     NumericsError, TrajkitError)
from .integrator import (DDPM_ANCESTRAL, DPM1, MSDE_VE, MSDE_VP, RF_ODE,
                         RF_SDE, SOLVER_KINDS, Trajectory, ddpm_step,
                         dpm1_step, dump_trajectories, forward_diffuse,
                         integrate, load_trajectory_states, msde_ve_step,
                         msde_vp_step, reverse_ode_euler_step,
                         reverse_sde_em_step, rf_beta, rf_ode_step,
                         rf_sde_step)
from .nn import Adam, MicroNet, time_features
from .oracle import (GaussianOracle, MixtureOracle, NetOracle, train_denoiser)
from .rng import CounterRng, RowSliceRng
from .schedule import (NoiseSchedule, TimeGrid, drift_diffusion,
                       eval_schedule, make_grid, rectflow_default, ve_default,
                       vp_default)
from .stats import EnergyTestResult, energy_distance_test
from .task import (DegradationOp, DivergenceSpec, RewardSpec, ToyDataset,
                   degrade, divergence, gen_dataset, reward, save_dataset)
from .verify import run_all_checks

__version__ = "0.1.0"

__all__ = [
    "AlignConfig", "AlignState", "GammaModulator", "align_step",
    "align_train", "gamma_eval", "sample_candidates", "select_best",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "RunConfig", "dump_config", "load_config", "parse_config",
    "CostReport", "DistillConfig", "DistillState", "default_delta",
    "distill_step", "distill_train", "eps_check", "eps_tilde",
    "error_ratio_probe", "guided_eps", "infer", "interp_init",
    "teacher_generate", "trajectory_cost", "write_cost_report",
    "CheckpointError", "ConfigError", "MissingArtifactError",
    "NumericsError", "TrajkitError",
    "DDPM_ANCESTRAL", "DPM1", "MSDE_VE", "MSDE_VP", "RF_ODE", "RF_SDE",
    "SOLVER_KINDS", "Trajectory", "ddpm_step", "dpm1_step",
    "dump_trajectories", "forward_diffuse", "integrate",
    "load_trajectory_states", "msde_ve_step", "msde_vp_step",
    "reverse_ode_euler_step", "reverse_sde_em_step", "rf_beta",
    "rf_ode_step", "rf_sde_step",
    "Adam", "MicroNet", "time_features",
    "GaussianOracle", "MixtureOracle", "NetOracle", "train_denoiser",
    "CounterRng", "RowSliceRng",
    "NoiseSchedule", "TimeGrid", "drift_diffusion", "eval_schedule",
    "make_grid", "rectflow_default", "ve_default", "vp_default",
    "EnergyTestResult", "energy_distance_test",
    "DegradationOp", "DivergenceSpec", "RewardSpec", "ToyDataset",
    "degrade", "divergence", "gen_dataset", "reward", "save_dataset",
    "run_all_checks",
    "__version__",
]
