import json

from cucl.cli import main


def write_matrix(path):
    path.write_text("task_trained,task_eval,accuracy\n1,1,0.800000\n2,1,0.600000\n2,2,0.900000\n")
    return path


def test_metrics_command(tmp_path, capsys):
    assert main(["metrics", str(write_matrix(tmp_path / "m.csv"))]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["acc"] - 0.75) < 1e-12 and abs(out["bwt"] + 0.2) < 1e-12 and abs(out["maa"] - 0.775) < 1e-12


def test_curve_command(tmp_path, capsys):
    m = write_matrix(tmp_path / "m.csv")
    assert main(["curve", str(m)]) == 0
    printed = capsys.readouterr().out
    assert main(["curve", str(m), "--out", str(tmp_path / "c.csv")]) == 0
    assert (tmp_path / "c.csv").read_text() == printed
    assert printed.splitlines()[-1] == "2,0.775000,0.750000"


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["metrics", str(tmp_path / "missing.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("task_trained,task_eval,accuracy\n2,1,0.5\n")
    assert main(["metrics", str(bad)]) == 1
    assert main(["run", "--stream", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--epochs", "0", "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_run_writes_artifacts(tmp_path, capsys):
    args = ["run", "--tasks", "2", "--classes-per-task", "2", "--train-per-class", "20",
            "--test-per-class", "5", "--input-dim", "8", "--codebooks", "2", "--codewords", "4",
            "--subdim", "4", "--epochs", "1", "--batch", "16", "--out", str(tmp_path / "r")]
    assert main(args) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out["metrics"]) == {"acc", "bwt", "maa"}
    assert (tmp_path / "r" / "curve.csv").exists()
