"""Test cases for the CLI module."""

import json

import pytest

from qotp import __version__, cli
from qotp.tabler import load_table
from qotp.types import LineStatus


def run(argv, capsys):
    """Run the CLI and return (exit code, parsed JSON report or None)."""
    with pytest.raises(SystemExit) as exc_info:
        cli.main(argv)
    out = capsys.readouterr().out
    return exc_info.value.code, json.loads(out) if out.strip() else None


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """A working directory with a small-signature config and fresh tables."""
    monkeypatch.chdir(tmp_path)
    (tmp_path / "qotp.env").write_text("SIG_N=50\nSIG_M=16\nSIG_TAU=0.6\nSEED=3\n")
    with pytest.raises(SystemExit) as exc_info:
        cli.main(["table", "generate", "--lines", "20000"])
    assert exc_info.value.code == 0
    return tmp_path


def test_version(capsys):
    with pytest.raises(SystemExit) as exc_info:
        cli.main(["--version"])
    assert exc_info.value.code == 0
    assert f"qotp {__version__}" in capsys.readouterr().out


def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc_info:
        cli.main([])
    assert exc_info.value.code == cli.EXIT_USAGE


def test_bad_arguments_use_sysexits_code(capsys):
    with pytest.raises(SystemExit) as exc_info:
        cli.main(["exec", "gate", "--gate", "not", "--input", "2"])
    assert exc_info.value.code == cli.EXIT_USAGE
    assert "Expected 0 or 1" in capsys.readouterr().err


def test_missing_tables_is_io_error(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    code, _ = run(["exec", "gate", "--gate", "id", "--input", "1"], capsys)
    assert code == cli.EXIT_IO


def test_presets(capsys):
    code, report = run(["presets"], capsys)
    assert code == 0
    assert report["command"] == "presets"
    assert report["presets"]["paper-v0.955"]["visibility"] == 0.955


def test_table_generate_writes_both_sides(workspace, capsys):
    alice = load_table(workspace / "alice.otpt")
    bob = load_table(workspace / "bob.otpt")
    assert len(alice) == len(bob) == 20_000
    assert alice.digest() == bob.digest()


def test_exec_gate(workspace, capsys):
    code, report = run(["exec", "gate", "--gate", "not", "--input", "0", "--repeat", "400"], capsys)
    assert code == 0
    assert report["expected"] == 1
    assert report["completed"] == 400
    assert report["success_rate"] == pytest.approx(0.854, abs=0.06)
    # consumed lines are persisted
    assert load_table(workspace / "alice.otpt").count(LineStatus.CONSUMED) == 400


def test_unknown_gate_name(workspace, capsys):
    code, _ = run(["exec", "gate", "--gate", "xor", "--input", "0"], capsys)
    assert code == cli.EXIT_USAGE


def test_gk_without_decomposition_aborts(workspace, capsys):
    code, _ = run(
        ["exec", "gk", "--k", "3", "--truth-table", "01101001", "--input", "101"], capsys
    )
    assert code == cli.EXIT_ABORT


def test_gk_simulated(workspace, capsys):
    code, report = run(
        ["exec", "gk", "--k", "2", "--truth-table", "0110", "--input", "10", "--runs", "2000", "--mode", "simulate"],
        capsys,
    )
    assert code == 0
    assert report["ideal_success"] == pytest.approx(0.75)
    assert report["success_rate"] == pytest.approx(0.75, abs=0.04)


def test_bell_test(workspace, capsys):
    code, report = run(["bell-test", "--lines", "4000"], capsys)
    assert code == 0
    assert report["chsh"]["verdict"] == "secure"
    assert load_table(workspace / "bob.otpt").count(LineStatus.CONSUMED) == 4000


def test_sign_and_verify(workspace, capsys):
    (workspace / "message.txt").write_text("transfer 10 coins to Bob")
    code, report = run(["sign", "--message-file", "message.txt"], capsys)
    assert code == 0
    assert report["accepted"]
    assert report["n"] == 50

    code, report = run(["verify", "--signature-file", "signature.otps"], capsys)
    assert code == 0
    assert report["accepted"]
    assert report["min_fraction"] >= 0.6


def test_verify_corrupted_signature(workspace, capsys):
    (workspace / "broken.otps").write_bytes(b"OTPS" + b"\x00" * 40)
    code, _ = run(["verify", "--signature-file", "broken.otps"], capsys)
    assert code == cli.EXIT_IO


def test_analyze_threshold(capsys):
    code, report = run(["analyze", "threshold", "--N", "1000", "--m", "224", "--p", "0.831"], capsys)
    assert code == 0
    assert report["tau_star"] == pytest.approx(0.776, abs=0.006)
    assert report["honest"] == pytest.approx(0.9987, abs=2e-3)
    assert report["cheat"] == pytest.approx(0.0011, abs=5e-4)
    assert "taus" not in report


def test_analyze_histogram(capsys):
    code, report = run(["analyze", "histogram", "--runs", "20", "--noise", "paper-v0.936"], capsys)
    assert code == 0
    assert report["histogram"]["runs"] == 20
    assert report["histogram"]["mean"] == pytest.approx(0.831, abs=0.005)


def test_eavesdrop(capsys):
    code, report = run(["eavesdrop", "--attack", "intercept-zx", "--lines", "2000", "--trials", "5"], capsys)
    assert code == 0
    assert report["detection"]["detected"] == 5
