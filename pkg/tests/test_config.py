"""Config tests: strict parsing, typed sections, lossless round trips."""

import pytest

from trajkit.config import (RunConfig, config_equal, dump_config, load_config,
                            parse_config)
from trajkit.errors import ConfigError


def test_defaults_roundtrip():
    cfg = RunConfig()
    assert config_equal(parse_config(dump_config(cfg)), cfg)


def test_parse_overrides():
    cfg = parse_config("""
seed = 11

[schedule]
kind = "VE"
sigma_max = 10.0

[sample]
solver = "msde_ve"
gamma = 0.75
""")
    assert cfg.seed == 11
    assert cfg.schedule.kind == "VE"
    assert cfg.schedule.sigma_max == 10.0
    assert cfg.schedule.t_min == 1e-3            # untouched default
    assert cfg.sample.solver == "msde_ve"
    assert cfg.sample.gamma == 0.75


def test_float_fidelity_roundtrip():
    cfg = RunConfig()
    cfg.distill.snr_threshold = 0.1 + 0.2        # not exactly representable
    cfg.align.learning_rate = 1.0 / 3.0
    back = parse_config(dump_config(cfg))
    assert back.distill.snr_threshold == cfg.distill.snr_threshold
    assert back.align.learning_rate == cfg.align.learning_rate


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        parse_config("[schedule]\nsolver = \"dpm1\"\n")
    with pytest.raises(ConfigError):
        parse_config("[sampler]\nsteps = 3\n")
    with pytest.raises(ConfigError):
        parse_config("steps = 3\n")


def test_type_checks():
    with pytest.raises(ConfigError):
        parse_config("seed = \"four\"\n")
    with pytest.raises(ConfigError):
        parse_config("seed = true\n")
    with pytest.raises(ConfigError):
        parse_config("[sample]\nsteps = 2.5\n")
    with pytest.raises(ConfigError):
        parse_config("[schedule]\nkind = 7\n")
    with pytest.raises(ConfigError):
        parse_config("[oracle]\nconditional = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[oracle]\nmean = 2.0\n")
    # Integers promote to float-typed keys.
    cfg = parse_config("[sample]\ngamma = 1\n")
    assert cfg.sample.gamma == 1.0
    assert isinstance(cfg.sample.gamma, float)


def test_malformed_toml():
    with pytest.raises(ConfigError):
        parse_config("seed = = 3")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_load_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("seed = 5\n", encoding="utf-8")
    assert load_config(path).seed == 5
