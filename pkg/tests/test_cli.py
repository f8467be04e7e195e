import json
import subprocess
import sys

import numpy as np
import pytest

from betafpu import cli
from betafpu.config import ConfigError, RunConfig
from betafpu.records import iter_trajectory, read_csv, read_field, read_header

SMALL = ["--N", "16", "--t-transient", "50", "--t-record", "2000", "--seed", "11"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.run(["simulate", "--out", str(out), "--beta", "25", *SMALL]) == 0
    return out


def test_simulate_outputs(run_dir):
    for name in ("traj.fpu", "modes.fpm", "snapshot.csv", "modes_final.csv", "config.txt", "manifest.json"):
        assert (run_dir / name).exists()
    assert read_header(run_dir / "traj.fpu").N == 16
    man = json.loads((run_dir / "manifest.json").read_text())
    assert man["config"]["beta"] == 25.0
    assert "SeedSequence" in man["seed_rule"]
    assert man["runs"][0]["energy_drift"] < 1e-5
    assert cli.validate_manifest(run_dir) == []
    rows = read_csv(run_dir / "snapshot.csv")
    assert list(rows[0]) == ["site", "q", "p", "e"]
    # the snapshot is the state after the last recorded sample
    last = list(iter_trajectory(run_dir / "traj.fpu"))[-1]
    np.testing.assert_array_equal([float(r["q"]) for r in rows], last.q[-1])


def test_simulation_is_bit_reproducible(run_dir, tmp_path):
    assert cli.run(["simulate", "--out", str(tmp_path), "--beta", "25", *SMALL]) == 0
    for name in ("traj.fpu", "modes.fpm", "snapshot.csv"):
        assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes()


def test_config_file_with_flag_override(run_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("N = 16\nbeta = 3\nt_transient = 50\nt_record = 2000\nseed = 11\n")
    out = tmp_path / "o"
    assert cli.run(["simulate", "--config", str(cfg), "--beta", "25", "--out", str(out)]) == 0
    assert (out / "traj.fpu").read_bytes() == (run_dir / "traj.fpu").read_bytes()


def test_analysis_verbs(run_dir, capsys):
    src = ["--out", str(run_dir)]
    assert cli.run(["spectrum", *src]) == 0
    rows = read_csv(run_dir / "spectrum.csv")
    assert list(rows[0]) == ["k", "omega", "mean_sq_a", "T_fit", "slope"]
    assert len(rows) == 15
    assert cli.run(["dispersion", *src, "--segment", "4096"]) == 0
    eta = read_csv(run_dir / "eta.csv")
    assert list(eta[0]) == ["beta", "eta_measured", "eta_analytic"]
    assert float(eta[0]["eta_measured"]) > 1.5
    spec = read_csv(run_dir / "spectrogram.csv")
    assert list(spec[0]) == ["k", "omega_bin", "power"]
    assert cli.run(["ratios", *src]) == 0
    r = read_csv(run_dir / "ratios.csv")
    assert list(r[0]) == ["beta", "h4_h2", "h4t_h2t"]
    assert float(r[0]["h4t_h2t"]) < float(r[0]["h4_h2"])
    assert cli.run(["modes", *src, "--k", "1,5", "--dispersion", "renormalized", "--segment", "4096"]) == 0
    m = read_csv(run_dir / "modes_5.csv")
    assert list(m[0]) == ["t", "amplitude", "phase"]
    assert cli.run(["breathers", *src, "--omega-cut", "7"]) == 0
    b = read_csv(run_dir / "breathers.csv")
    cols = ["track_id", "t_start", "t_end", "mean_site", "max_span", "oscillation_count", "peak_energy"]
    assert b and list(b[0]) == cols
    h, t, qf = read_field(run_dir / "qf.fpf")
    assert qf.shape == (t.size, 16)
    assert cli.validate_manifest(run_dir) == []
    man = json.loads((run_dir / "manifest.json").read_text())
    for name in ("spectrum.csv", "eta.csv", "spectrogram.csv", "ratios.csv", "modes_5.csv", "breathers.csv", "qf.fpf"):
        assert name in man["files"]


def test_analysis_is_restartable(run_dir, tmp_path):
    assert cli.run(["spectrum", "--records", str(run_dir), "--out", str(tmp_path)]) == 0
    assert cli.run(["spectrum", "--records", str(run_dir), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "spectrum.csv").read_bytes() == (tmp_path / "b" / "spectrum.csv").read_bytes()


def test_manifest_detects_tampering(run_dir, tmp_path):
    out = tmp_path / "copy"
    assert cli.run(["simulate", "--out", str(out), "--beta", "25", *SMALL]) == 0
    with open(out / "snapshot.csv", "a") as fh:
        fh.write("x\n")
    assert cli.validate_manifest(out) == ["snapshot.csv"]


def test_exit_codes(tmp_path, capsys):
    assert cli.run(["simulate", "--out", str(tmp_path), "--N", "7"]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("N = many\n")
    assert cli.run(["simulate", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.run(["simulate", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    assert cli.run(["spectrum", "--records", str(tmp_path / "none"), "--out", str(tmp_path)]) == cli.EXIT_IO
    blocked = tmp_path / "file"
    blocked.write_text("")
    assert cli.run(["simulate", "--out", str(blocked / "sub"), *SMALL]) == cli.EXIT_IO
    huge = ["--N", "8", "--energy", "1e9", "--t-transient", "0", "--t-record", "100"]
    assert cli.run(["simulate", "--out", str(tmp_path / "b"), *huge]) == cli.EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "step" in err
    with pytest.raises(SystemExit) as info:
        cli.run(["nonsense"])
    assert info.value.code == cli.EXIT_CONFIG


def test_corrupt_record_is_io_error(tmp_path):
    (tmp_path / "traj.fpu").write_bytes(b"nope")
    (tmp_path / "modes.fpm").write_bytes(b"nope")
    assert cli.run(["spectrum", "--out", str(tmp_path)]) == cli.EXIT_IO


@pytest.mark.parametrize("value,expected", [("0", None), ("1", 1), ("3", 3), ("99", 4)])
def test_sweep_worker_cap(monkeypatch, value, expected):
    monkeypatch.setenv("FPU_THREADS", value)
    n = cli.sweep_workers(4)
    assert 1 <= n <= 4
    if expected is not None:
        assert n == expected


def test_sweep_worker_cap_rejects_junk(monkeypatch):
    monkeypatch.setenv("FPU_THREADS", "lots")
    with pytest.raises(ConfigError):
        cli.sweep_workers(2)


def test_sweep_sorted_and_parallel_safe(tmp_path, monkeypatch):
    args = ["sweep", "--betas", "4,1", "--N", "16", "--t-transient", "20", "--t-record", "1700", "--seed", "3"]
    monkeypatch.setenv("FPU_THREADS", "1")
    assert cli.run([*args, "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("FPU_THREADS", "2")
    assert cli.run([*args, "--out", str(tmp_path / "b")]) == 0
    rows = read_csv(tmp_path / "a" / "eta.csv")
    assert [float(r["beta"]) for r in rows] == [1.0, 4.0]
    for name in ("eta.csv", "ratios.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_verify_short(capsys):
    assert cli.run(["verify", "--drift-time", "200", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "[FAIL]" not in out
    assert out.count("[PASS]") >= 12


def test_console_script_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "betafpu.cli", "simulate", "--out", str(tmp_path), "--N", "5"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "config error" in proc.stderr


def test_run_config_defaults_are_full_scale():
    cfg = RunConfig()
    assert (cfg.N, cfg.target_energy, cfg.dt, cfg.t_record) == (128, 200.0, 0.01, 1e5)
