import subprocess
import sys

from anomalyflow.cli import EXIT_BREAKDOWN, EXIT_OK, EXIT_USAGE, main

SMALL_RUN = """
[grid]
N = 8
active_axes = x1

[initial]
kind = balanced_psi
amplitude = 0.01

[flow]
dt_initial = 0.001
t_max = 0.004

[monitor]
cadence = 2
"""


def test_thresholds_command(capsys):
    assert main(["thresholds", "--a0", "1", "--B", "1", "--C0", "1", "--p", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "= 1/14 " in out
    assert "= 1/26 " in out
    assert "mu = 1/300 " in out
    assert "= 1/30000000 " in out


def test_thresholds_with_alpha_prime(capsys):
    assert main(["thresholds", "--B", "2", "--C0", "1/2", "--alpha-prime", "1e-10"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "1/1920000000" in out
    assert "ok=True" in out


def test_thresholds_rejects_bad_numbers(capsys):
    assert main(["thresholds", "--B", "0.5", "--C0", "1"]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_audit_command(tmp_path, capsys):
    code = main(["audit", "--generator", "balanced_psi", "--N", "16", "--amplitude", "0.01", "-o", str(tmp_path)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "commutator_11" in out and "PASS" in out
    assert (tmp_path / "identities.csv").exists()
    assert (tmp_path / "identities.png").exists()


def test_audit_flat_generator(capsys):
    assert main(["audit", "--generator", "flat", "--N", "8"]) == EXIT_OK
    lines = [l for l in capsys.readouterr().out.splitlines() if "residual=" in l]
    assert len(lines) == 5
    for line in lines:
        assert " PASS " in line
        assert float(line.split("residual=")[1].split()[0]) < 1e-15


def test_run_then_inspect(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(SMALL_RUN, encoding="utf-8")
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out), "-q"]) == EXIT_OK
    for name in ("config.ini", "monitor.csv", "identities.csv", "gronwall.csv", "final.afl", "monitor.png"):
        assert (out / name).exists(), name
    assert sorted(p.name for p in (out / "snapshots").iterdir()) == [
        "step_000000.afl",
        "step_000002.afl",
        "step_000004.afl",
    ]
    assert len((out / "monitor.csv").read_text().splitlines()) == 4
    capsys.readouterr()
    assert main(["inspect", str(out / "final.afl")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "format version: 1" in text
    assert "active axes: x1" in text
    assert "t: 0.004" in text
    # N = 8 under-resolves the second covariant derivatives, so the audit reports failures
    assert main(["audit", "--snapshot", str(out / "final.afl")]) == EXIT_BREAKDOWN
    assert "commutator_11        FAIL" in capsys.readouterr().out


def test_bad_config_exits_with_usage_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[flow]\nalpha_prime = -1\n", encoding="utf-8")
    assert main(["run", str(cfg)]) == EXIT_USAGE
    assert "line 2" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) == EXIT_USAGE


def test_breakdown_exits_with_code_one(tmp_path, capsys):
    cfg = tmp_path / "stress.ini"
    cfg.write_text(
        "[grid]\nN = 4\n[flow]\nalpha_prime = 1\nphi_source = constant_form\n"
        "phi_coefficients = -50, 0, 0, 0, -50, 0, 0, 0, -50\ndt_initial = 0.01\nt_max = 1\n"
        "[output]\nemit_figures = false\n",
        encoding="utf-8",
    )
    assert main(["run", str(cfg), "-o", str(tmp_path / "o"), "-q"]) == EXIT_BREAKDOWN
    assert "location (0,)" in capsys.readouterr().err
    assert (tmp_path / "o" / "final.afl").exists()


def test_inspect_rejects_corrupt_file(tmp_path, capsys):
    bad = tmp_path / "bad.afl"
    bad.write_bytes(b"nonsense")
    assert main(["inspect", str(bad)]) == EXIT_USAGE
    assert "header" in capsys.readouterr().err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "anomalyflow.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("anomalyflow ")
