"""Run configuration: TOML-shaped sections with strict key checking.

Every numeric default mirrors the library defaults; parsing rejects
unknown sections and keys, and serialize→parse round trips reproduce
the config exactly (floats are written with 17 significant digits).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:                      # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class ScheduleConfig:
    kind: str = "VP"
    t_min: float = 1e-3
    t_max: float = 1.0
    lambda_max: float = 10.0
    lambda_min: float = -10.0
    sigma_min: float = 0.01
    sigma_max: float = 50.0


@dataclass
class OracleConfig:
    type: str = "gaussian"           # gaussian | mixture | net
    dim: int = 2
    mean: list = field(default_factory=lambda: [0.0, 0.0])
    scale: float = 1.0
    weights: list = field(default_factory=list)
    means: list = field(default_factory=list)
    scales: list = field(default_factory=list)
    hidden: list = field(default_factory=lambda: [64, 64])
    conditional: bool = True
    base_scale: float = -1.0         # <= 0 disables the analytic prior
    pretrain_steps: int = 3000
    pretrain_lr: float = 1e-3
    batch_size: int = 64


@dataclass
class TaskConfig:
    kind: str = "ring"
    n: int = 512
    test_n: int = 128
    scale: float = 0.7
    noise_std: float = 0.05


@dataclass
class AlignSection:
    n_candidates: int = 8
    reward: str = "neg_mse"
    divergence: str = "sq_l2"
    learning_rate: float = 1e-4
    psi_learning_rate: float = 1e-3
    iterations: int = 800
    steps: int = 10
    anchor_weight: float = 1.0
    gamma_jitter: float = 0.3


@dataclass
class DistillSection:
    k: int = 1
    delta: float = -1.0              # < 0 means "derive from snr_threshold"
    w: float = 0.1
    teacher_steps: int = 40
    mix_ratio: float = 0.5
    learning_rate: float = 1e-3
    iterations: int = 2000
    snr_threshold: float = 1e-3
    max_grad_norm: float = 0.0


@dataclass
class SampleSection:
    solver: str = "dpm1"
    steps: int = 10
    n: int = 64
    gamma: float = 0.0
    alpha_mod: float = 1.5
    noise_variant: str = "exact"


@dataclass
class OutputSection:
    dir: str = "."


@dataclass
class RunConfig:
    seed: int = 0
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    align: AlignSection = field(default_factory=AlignSection)
    distill: DistillSection = field(default_factory=DistillSection)
    sample: SampleSection = field(default_factory=SampleSection)
    output: OutputSection = field(default_factory=OutputSection)


_SECTIONS = {
    "schedule": ScheduleConfig,
    "oracle": OracleConfig,
    "task": TaskConfig,
    "align": AlignSection,
    "distill": DistillSection,
    "sample": SampleSection,
    "output": OutputSection,
}


def _fill_section(cls, data: dict, section: str):
    known = {f.name: f for f in fields(cls)}
    obj = cls()
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        current = getattr(obj, key)
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"key {section}.{key} must be a boolean")
        elif isinstance(current, int) and not isinstance(value, bool):
            if not isinstance(value, int):
                raise ConfigError(f"key {section}.{key} must be an integer")
        elif isinstance(current, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"key {section}.{key} must be a number")
            value = float(value)
        elif isinstance(current, str) and not isinstance(value, str):
            raise ConfigError(f"key {section}.{key} must be a string")
        elif isinstance(current, list) and not isinstance(value, list):
            raise ConfigError(f"key {section}.{key} must be a list")
        setattr(obj, key, value)
    return obj


def parse_config(text: str) -> RunConfig:
    """Parse TOML text into a RunConfig, rejecting unknown keys."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    cfg = RunConfig()
    for key, value in data.items():
        if key == "seed":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError("top-level seed must be an integer")
            cfg.seed = value
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section [{key}] must be a table")
            setattr(cfg, key, _fill_section(_SECTIONS[key], value, key))
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value of type {type(v).__name__}")


def dump_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig back to TOML; parse(dump(c)) == c."""
    lines = [f"seed = {cfg.seed}", ""]
    for name, cls in _SECTIONS.items():
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(cls):
            lines.append(f"{f.name} = {_format_value(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def config_equal(a: RunConfig, b: RunConfig) -> bool:
    return dataclasses.asdict(a) == dataclasses.asdict(b)
