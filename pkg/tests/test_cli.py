import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qfpu.cli import main
from qfpu.config import ConfigError, dump_config, parse_config

SMALL = """
[chain]
N = 4
alpha = {alpha}
[sampler]
T = 1.0
P = 2
dt = {dt}
n_burn = 200
stride = 5
n_samples = 60
seed = 11
[thermostat]
tau_tilde = 1.0
n_respa = 1
[rpmd]
n_points = 5
t_max = 0.5
"""


def write_config(tmp_path, name="run.ini", alpha=0.0, dt=0.01, extra=""):
    path = tmp_path / name
    path.write_text(SMALL.format(alpha=alpha, dt=dt) + extra)
    return str(path)


@given(alpha=st.floats(0, 5), T=st.floats(0.01, 10), P=st.integers(1, 64), seed=st.integers(0, 2**31),
       tau=st.one_of(st.none(), st.floats(0.1, 50)), temps=st.lists(st.floats(0.01, 5), min_size=1, max_size=4))
def test_config_round_trip(alpha, T, P, seed, tau, temps):
    text = f"[chain]\nN = 8\nalpha = {alpha!r}\n[sampler]\nT = {T!r}\nP = {P}\nseed = {seed}\n"
    text += f"[thermostat]\ntau_tilde = {tau!r}\n".replace("None", "none")
    text += "[oracle]\ntemperatures = " + ", ".join(repr(t) for t in temps) + "\n"
    text += "[estimators]\nsubsets = 1 2, 4\n"
    cfg = parse_config(text)
    assert parse_config(dump_config(cfg)) == cfg
    assert dump_config(parse_config(dump_config(cfg))) == dump_config(cfg)


@pytest.mark.parametrize("text,field", [
    ("[chain]\nalpha = 1\n[sampler]\nT = 1\n", r"\[chain\] N"),
    ("[chain]\nN = 8\n", r"\[sampler\] T"),
    ("[chain]\nN = 8\nspeed = 3\n[sampler]\nT = 1\n", r"\[chain\] speed"),
    ("[chain]\nN = 8\n[sampler]\nT = hot\n", r"\[sampler\] T"),
    ("[chain]\nN = 8\n[sampler]\nT = -1\n", r"\[sampler\]"),
    ("[chain]\nN = 8\nalpha = 1\nbeta = 2\n[sampler]\nT = 1\n", r"\[chain\]"),
    ("[chain]\nN = 8\n[sampler]\nT = 1\n[rpmd]\nobservables = p3\n", r"\[rpmd\] observables"),
    ("[chain]\nN = 8\n[sampler]\nT = 1\n[estimators]\nsubsets = 9\n", r"\[estimators\] subsets"),
    ("[chain]\nN = 8\n[sampler]\nT = 1\n[thermostat]\nM = 1\n", r"\[thermostat\]"),
    ("[chain]\nN = 8\n[sampler]\nT = 1\n[plots]\nx = 1\n", r"\[plots\]"),
    ("no section header", "malformed"),
])
def test_validation_names_the_field(text, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(text)


def test_defaults_follow_chain_length():
    cfg = parse_config("[chain]\nN = 5\n[sampler]\nT = 1\n")
    assert cfg.observables() == ("q3",)
    assert cfg.subsets() == ((1,), (3,), (5,))
    assert cfg.force_particles() == (1, 5)


def test_sample_correlate_oracle_report(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["sample", cfg, "--out", str(out)]) == 0
    assert main(["correlate", cfg, str(out / "samples.qfs"), "--out", str(out)]) == 0
    assert main(["oracle", cfg, "--out", str(out)]) == 0
    assert main(["report", str(out), "--out", str(out), "--figures"]) == 0
    text = capsys.readouterr().out
    assert "=== checks ===" in text and "=== zeta ===" in text and "=== end ===" in text
    summary = json.loads((out / "sample_summary.json").read_text())
    assert summary["schema_version"] == 1 and summary["n_samples"] == 60
    assert "drift_below_1e-6" in summary
    echoed = parse_config((out / "config.ini").read_text())
    assert echoed == parse_config(open(cfg).read())
    for name in ("correlations/K_q2.csv", "zeta_q2.json", "oracle/mode_variance.csv", "oracle/kubo_position.csv",
                 "oracle/rp_frequencies.csv", "oracle/wall_density.csv", "estimators/Q_1.csv", "estimators/S_1.csv",
                 "estimators/force_1.csv", "report.json", "report.txt", "variance_vs_T.png"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1 and report["figures"]


def test_same_seed_gives_identical_archives(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["sample", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["sample", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/samples.qfs").read_bytes() == (tmp_path / "b/samples.qfs").read_bytes()
    assert main(["sample", cfg, "--seed", "12", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a/samples.qfs").read_bytes() != (tmp_path / "c/samples.qfs").read_bytes()
    assert "seed = 12" in (tmp_path / "c/config.ini").read_text()


def test_archive_config_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["sample", cfg, "--out", str(tmp_path / "a")]) == 0
    other = tmp_path / "other.ini"
    other.write_text(open(cfg).read().replace("P = 2", "P = 3"))
    assert main(["correlate", str(other), str(tmp_path / "a/samples.qfs"), "--out", str(tmp_path)]) == 1
    assert "P=2" in capsys.readouterr().err


def test_empty_archive(tmp_path, capsys):
    cfg = write_config(tmp_path)
    arch = tmp_path / "empty.qfs"
    arch.write_text("QFPU-SNAPSHOTS 1\nN=4\nP=2\nT=1.0\nalpha=0.0\nn_samples=0\nEND\n")
    assert main(["correlate", cfg, str(arch), "--out", str(tmp_path)]) == 1
    assert "no snapshots" in capsys.readouterr().err


def test_exit_codes(tmp_path):
    assert main(["sample", str(tmp_path / "missing.ini")]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[chain]\nN = 4\n")
    assert main(["sample", str(bad), "--out", str(tmp_path)]) == 1
    blowup = write_config(tmp_path, "blow.ini", alpha=5.0, dt=5.0)
    assert main(["sample", blowup, "--out", str(tmp_path / "blow")]) == 2
    assert main(["report", str(tmp_path / "nowhere")]) == 1


def test_strict_report_fails_on_drift(tmp_path):
    cfg = write_config(tmp_path, dt=0.05)
    out = tmp_path / "coarse"
    assert main(["sample", cfg, "--out", str(out)]) == 0
    assert json.loads((out / "sample_summary.json").read_text())["relative_drift"] > 1e-6
    assert main(["report", str(out), "--out", str(out)]) == 0
    assert main(["report", str(out), "--out", str(out), "--strict"]) == 3


def test_report_tables_pair_classical_and_quantum(tmp_path, capsys):
    for P in (1, 2):
        cfg = write_config(tmp_path, f"p{P}.ini", alpha=0.4)
        text = open(cfg).read().replace("P = 2", f"P = {P}")
        open(cfg, "w").write(text)
        assert main(["sample", cfg, "--out", str(tmp_path / f"p{P}")]) == 0
        assert main(["correlate", cfg, str(tmp_path / f"p{P}/samples.qfs"), "--out", str(tmp_path / f"p{P}")]) == 0
    assert main(["report", str(tmp_path / "p1"), str(tmp_path / "p2"), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert len(doc["tables"]["quantum_vs_classical"]) == 1
    assert sorted(z["P"] for z in doc["tables"]["zeta"]) == [1, 2]
