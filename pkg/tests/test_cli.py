"""CLI tests: commands, overrides, exit codes, artifacts."""

import numpy as np
import pytest

from trajkit.checkpoint import load_checkpoint
from trajkit.cli import main

GAUSS_CFG = """
seed = 7

[oracle]
type = "gaussian"
mean = [2.0, 2.0]
scale = 1.0

[sample]
solver = "msde_vp"
steps = 12
n = 16
gamma = 0.5

[distill]
teacher_steps = 20
"""

NET_CFG = """
seed = 7

[oracle]
type = "net"
dim = 2
hidden = [8, 8]
base_scale = 0.7071067811865476
pretrain_steps = 120

[task]
kind = "ring"
n = 48

[align]
iterations = 4
steps = 6
n_candidates = 4

[distill]
iterations = 4
teacher_steps = 8
"""


@pytest.fixture
def gauss_cfg(tmp_path):
    path = tmp_path / "gauss.toml"
    path.write_text(GAUSS_CFG, encoding="utf-8")
    return path


@pytest.fixture
def net_cfg(tmp_path):
    path = tmp_path / "net.toml"
    path.write_text(NET_CFG, encoding="utf-8")
    return path


def test_sample_writes_trajectories(gauss_cfg, tmp_path):
    out = tmp_path / "run"
    assert main(["sample", "--config", str(gauss_cfg), "--out", str(out)]) == 0
    dump = (out / "trajectories.tsv").read_text().splitlines()
    assert dump[0].split("\t") == ["trajectory_id", "step", "t", "x0", "x1"]
    assert len(dump) == 1 + 16 * 13
    assert (out / "config.toml").exists()


def test_sample_thread_count_invariance(gauss_cfg, tmp_path, monkeypatch):
    outs = []
    for name, threads in (("a", "1"), ("b", "8")):
        monkeypatch.setenv("TRAJKIT_THREADS", threads)
        out = tmp_path / name
        assert main(["sample", "--config", str(gauss_cfg),
                     "--out", str(out)]) == 0
        outs.append((out / "trajectories.tsv").read_bytes())
    assert outs[0] == outs[1]


def test_sample_flag_overrides(gauss_cfg, tmp_path):
    out = tmp_path / "run"
    assert main(["sample", "--config", str(gauss_cfg), "--out", str(out),
                 "--solver", "dpm1", "--steps", "3", "--n", "4",
                 "--seed", "99"]) == 0
    dump = (out / "trajectories.tsv").read_text().splitlines()
    assert len(dump) == 1 + 4 * 4


def test_invalid_thread_env(gauss_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("TRAJKIT_THREADS", "many")
    assert main(["sample", "--config", str(gauss_cfg),
                 "--out", str(tmp_path / "x")]) == 2


def test_missing_config_exit_code(tmp_path):
    assert main(["sample", "--config", str(tmp_path / "absent.toml")]) == 2


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[sample]\nsolver = 3\n", encoding="utf-8")
    assert main(["sample", "--config", str(bad)]) == 2


def test_align_requires_net_oracle(gauss_cfg, tmp_path):
    assert main(["align", "--config", str(gauss_cfg),
                 "--out", str(tmp_path / "a")]) == 2


def test_align_missing_resume_checkpoint(net_cfg, tmp_path):
    assert main(["align", "--config", str(net_cfg),
                 "--out", str(tmp_path / "a"),
                 "--resume", str(tmp_path / "absent.ckpt")]) == 4


def test_align_and_distill_pipeline(net_cfg, tmp_path):
    out = tmp_path / "align"
    assert main(["align", "--config", str(net_cfg), "--out", str(out)]) == 0
    assert (out / "pretrained.ckpt").exists()
    ck = load_checkpoint(out / "aligned.ckpt")
    assert set(ck.arrays) == {"theta", "psi"}
    assert ck.meta["command"] == "align"
    lines = (out / "align_metrics.tsv").read_text().splitlines()
    assert lines[0].startswith("iteration\tloss")
    assert len(lines) == 1 + 4

    dout = tmp_path / "distill"
    assert main(["distill", "--config", str(net_cfg), "--out", str(dout),
                 "--resume", str(out / "pretrained.ckpt")]) == 0
    dk = load_checkpoint(dout / "distilled.ckpt")
    assert dk.meta["command"] == "distill"
    assert {"k", "w", "delta"} <= set(dk.meta)
    assert set(dk.arrays) == {"theta", "teacher_theta"}
    assert not np.array_equal(dk.arrays["theta"], dk.arrays["teacher_theta"])


def test_distill_corrupt_resume(net_cfg, tmp_path):
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a checkpoint at all")
    assert main(["distill", "--config", str(net_cfg),
                 "--out", str(tmp_path / "d"),
                 "--resume", str(junk)]) == 5


def test_cost_command(gauss_cfg, tmp_path, capsys):
    out = tmp_path / "cost"
    assert main(["cost", "--config", str(gauss_cfg), "--out", str(out),
                 "--k", "1,2,4"]) == 0
    printed = capsys.readouterr().out
    assert "k=1" in printed and "k=4" in printed
    for k in (1, 2, 4):
        lines = (out / f"cost_k{k}.tsv").read_text().splitlines()
        assert lines[0] == "k\tstep_index\tt\tcost\ttotal"
        assert len(lines) == 1 + k


def test_cost_k_validation(gauss_cfg, tmp_path):
    assert main(["cost", "--config", str(gauss_cfg),
                 "--out", str(tmp_path / "c"), "--k", "7"]) == 2
    assert main(["cost", "--config", str(gauss_cfg),
                 "--out", str(tmp_path / "c"), "--k", "x"]) == 2
