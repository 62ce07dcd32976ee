import io
import json
import subprocess
import sys

import pytest

from labelcvar.cli import main


def run(argv, stdin=None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    return main(argv)


def test_lcvar_eval_stdin(monkeypatch, capsys):
    payload = json.dumps({"risks": [0.1, 0.5, 0.9], "probs": [0.7, 0.2, 0.1]})
    assert run(["lcvar-eval", "--alpha", "0.5"], payload, monkeypatch) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == pytest.approx(0.42, abs=1e-12)
    assert out["primal_value"] == pytest.approx(out["value"], abs=1e-12)
    assert out["lambda"] == 0.1 and out["active_set"] == [1, 2]
    assert out["worst_class"] == 0.9


def test_lhcvar_eval_file(tmp_path, capsys):
    path = tmp_path / "in.json"
    path.write_text(json.dumps({"risks": [0.2, 0.6], "probs": [0.9, 0.1], "alphas": [0.5, 0.5]}))
    assert main(["lcvar-eval", str(path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["value"] == pytest.approx(0.1 * 2 * 0.6 + 0.8 * 0.2, abs=1e-12)


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert run(["lcvar-eval"], json.dumps({"risks": [0.1], "probs": [1.0]}), monkeypatch) == 1
    assert run(["lcvar-eval", "--alpha", "0.5"], "not json", monkeypatch) == 2
    assert run(["lcvar-eval", "--alpha", "0.5"], '{"risks": [NaN, 0.1], "probs": [0.5, 0.5]}', monkeypatch) == 3
    assert run(["lcvar-eval", "--alpha", "2"], json.dumps({"risks": [0.1, 0.2], "probs": [0.5, 0.5]}),
               monkeypatch) == 1
    assert main(["real", "--seed", "0", "--train", str(tmp_path / "x.csv"), "--test", str(tmp_path / "y.csv"),
                 "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["synth-sweep"])  # --seed is mandatory
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1


def test_synth_sweep_command(tmp_path, capsys):
    code = main(["synth-sweep", "--seed", "0", "--out", str(tmp_path), "--p-values", "0.9",
                 "--methods", "standard,lcvar:0.1", "--n-train", "300", "--n-test", "300", "--epochs", "5"])
    assert code == 0
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 3
    assert "lcvar:0.1" in capsys.readouterr().out


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "labelcvar.cli", "lcvar-eval", "--alpha", "1"],
                          input='{"risks": [0.3, 0.7], "probs": [0.5, 0.5]}', capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["value"] == pytest.approx(0.5)
