import csv
import io
import subprocess
import sys

import pytest

from drawdown_dividend.cli import fmt, run


def _csv(text):
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(rows))))


def _stable(text):
    return [ln for ln in text.splitlines() if not ln.startswith("# timestamp=")]


def test_solve_reference(capsys):
    assert run(["solve", "--mu", "0.08", "--sigma", "0.2", "--delta", "0.2", "--alpha", "0.5", "--p", "0.8"]) == 0
    cap = capsys.readouterr()
    row = _csv(cap.out)[0]
    assert float(row["w_star"]) == pytest.approx(11.2992, rel=1e-4)
    assert "w_star" in cap.err  # aligned text view


def test_manifest_header(capsys):
    run(["solve"])
    head = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("#")]
    keys = {ln[2:].split("=", 1)[0] for ln in head}
    assert {"tool", "subcommand", "params", "timestamp"} <= keys


def test_byte_identical_apart_from_timestamp(capsys):
    run(["sweep", "--param", "alpha", "--from", "0.2", "--to", "0.8", "--steps", "4"])
    a = capsys.readouterr().out
    run(["sweep", "--param", "alpha", "--from", "0.2", "--to", "0.8", "--steps", "4"])
    b = capsys.readouterr().out
    assert _stable(a) == _stable(b)


def test_eval_state(capsys):
    assert run(["eval", "--x", "8", "--z", "1"]) == 0
    row = _csv(capsys.readouterr().out)[0]
    assert row["region"] == "C" and float(row["c"]) == 1.0


def test_eval_dual(capsys):
    assert run(["eval", "--dual", "2"]) == 0
    row = _csv(capsys.readouterr().out)[0]
    assert list(row) == ["y", "region", "uhat", "uhat_y", "uhat_yy"]
    assert row["region"] == "LOW"


def test_eval_negative_surplus(capsys):
    assert run(["eval", "--x", "-1", "--z", "1"]) == 1
    assert "x >= 0" in capsys.readouterr().err


def test_infeasible_params_exit_one(capsys):
    assert run(["solve", "--p", "0.25"]) == 1
    assert "RiskAversionInfeasible" in capsys.readouterr().err


def test_usage_errors_exit_two(capsys):
    assert run(["solve", "--bogus"]) == 2
    assert run(["sweep", "--param", "gamma", "--from", "0", "--to", "1", "--steps", "2"]) == 2
    assert run([]) == 2
    assert run(["eval"]) == 2
    capsys.readouterr()


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("alpha=0.3\np=0.7\n")
    run(["solve", "--config", str(cfg), "--p", "0.8"])
    out = capsys.readouterr().out
    assert "alpha=0.3 p=0.8" in out


def test_sweep_x_and_grid(capsys, tmp_path):
    out = tmp_path / "s.csv"
    assert run(["sweep", "--param", "alpha", "--from", "0.3", "--to", "0.6", "--steps", "2", "--x-grid", "5",
                "--out", str(out)]) == 0
    rows = _csv(out.read_text())
    assert len(rows) == 10 and set(rows[0]) >= {"param", "w_star", "x", "value", "pi", "c"}
    assert run(["sweep", "--param", "x", "--from", "0", "--to", "20", "--steps", "11"]) == 0
    assert len(_csv(capsys.readouterr().out)) == 11


def test_merton_branch(capsys):
    assert run(["solve", "--alpha", "0"]) == 0
    row = _csv(capsys.readouterr().out)[0]
    assert float(row["pi_slope"]) == pytest.approx(2.5)


def test_verify_exit_zero(capsys):
    assert run(["verify", "--grid", "10"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert all(r["passed"] == "true" for r in rows if r["kind"] == "hard")


def test_simulate_with_trace(tmp_path, capsys):
    tr = tmp_path / "trace.csv"
    assert run(["simulate", "--x0", "5", "--z0", "1", "--dt", "0.01", "--horizon", "20", "--paths", "50",
                "--seed", "3", "--trace", "2", "--trace-out", str(tr), "--trace-stride", "10"]) == 0
    row = _csv(capsys.readouterr().out)[0]
    assert int(row["n_paths"]) == 50
    trace = _csv(tr.read_text())
    assert {r["path"] for r in trace} == {"0", "1"}
    assert list(trace[0]) == ["path", "t", "X", "z", "c", "pi"]


def test_simulate_threads_identical(capsys):
    args = ["simulate", "--x0", "5", "--dt", "0.01", "--horizon", "20", "--paths", "40", "--seed", "1"]
    run(args + ["--threads", "1"])
    a = capsys.readouterr().out
    run(args + ["--threads", "2"])
    b = capsys.readouterr().out
    assert _stable(a) == _stable(b)


def test_number_format():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3" and fmt(True) == "true"


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "drawdown_dividend", "solve"], capture_output=True, text=True)
    assert out.returncode == 0 and "w_star" in out.stdout
