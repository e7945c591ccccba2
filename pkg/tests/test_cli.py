import json
import subprocess
import sys

import pytest

from raar.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_recourse_analytic_deterministic(capsys):
    argv = ["recourse", "--analytic", "quad1d", "--mode", "max-y", "--seed", "7", "--iters", "10"]
    c1, o1, _ = run(argv, capsys)
    c2, o2, _ = run(argv, capsys)
    assert c1 == c2 == 0 and o1 == o2
    d = json.loads(o1)
    assert d["config"]["bo"]["seed"] == 7
    assert d["config"]["cli"]["mode"] == "max-y"


def test_recourse_target_requires_pct(capsys):
    code, _, err = run(["recourse", "--analytic", "identity", "--mode", "target-y"], capsys)
    assert code == 2 and "--target-pct" in err


def test_unknown_mode_lists_allowed(capsys):
    with pytest.raises(SystemExit) as info:
        main(["recourse", "--analytic", "identity", "--mode", "best-y"])
    assert info.value.code == 2
    assert "target-rel" in capsys.readouterr().err


def test_missing_mode_is_usage_error(capsys):
    code, _, err = run(["recourse", "--analytic", "identity"], capsys)
    assert code == 2 and "max-y" in err


@pytest.fixture
def small_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    return p


def test_row_out_of_range(capsys, small_csv):
    code, _, err = run(["recourse", "--data", str(small_csv), "--target-col", "y", "--row", "10",
                        "--mode", "max-y"], capsys)
    assert code == 1 and "RowOutOfRange" in err


def test_recourse_data_knn_with_out_and_trace(capsys, small_csv, tmp_path):
    out = tmp_path / "res" / "r.json"
    code, stdout, _ = run(["recourse", "--data", str(small_csv), "--target-col", "y", "--row", "1",
                           "--mode", "target-rel", "--target-pct", "20", "--model", "knn:1",
                           "--iters", "5", "--out", str(out), "--trace"], capsys)
    assert code == 0
    assert out.read_text() == stdout
    assert (tmp_path / "res" / "r.trace.csv").read_text().startswith("step,objective,best_so_far,a,b\n")


def test_config_file_under_flags(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"analytic": "identity", "mode": "target-y", "target_pct": 10, "iters": 3, "seed": 4}))
    code, out, _ = run(["recourse", "--config", str(cfg), "--seed", "9"], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["config"]["bo"]["seed"] == 9 and d["config"]["bo"]["n_iter"] == 3


def test_env_seed(capsys, monkeypatch):
    monkeypatch.setenv("RAAR_SEED", "13")
    code, out, _ = run(["recourse", "--analytic", "quad1d", "--mode", "max-y", "--iters", "2"], capsys)
    assert code == 0 and json.loads(out)["config"]["bo"]["seed"] == 13


def test_relevance_control_points(capsys, tmp_path):
    cp = tmp_path / "cp.csv"
    cp.write_text("y,rel\n0,0\n1,1\n")
    code, out, _ = run(["relevance", "--control-points", str(cp), "--grid", "3"], capsys)
    assert code == 0
    assert out.splitlines() == ["y,phi", "0.0,0.0", "0.5,0.5", "1.0,1.0"]


def test_relevance_auto(capsys, tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n" + "".join(f"{i},{i}\n" for i in range(1, 101)))
    code, out, _ = run(["relevance", "--data", str(p), "--target-col", "y", "--auto", "right", "--grid", "5"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[1] == "50.5,0.0" and lines[-1] == "100.0,1.0"


def test_relevance_degenerate(capsys, tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n" + "".join(f"{i},5\n" for i in range(10)))
    code, _, err = run(["relevance", "--data", str(p), "--target-col", "y", "--auto", "right"], capsys)
    assert code == 1 and "DegenerateDistribution" in err


def test_batch_malformed_plan(capsys, tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"datasets": [{"name": "x", "analytic": "identity"}], "bo": {"n_iter": "ten"}}))
    code, _, err = run(["batch", "--config", str(plan), "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 2 and "$.bo.n_iter" in err


def test_batch_unwritable_out_dir(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"datasets": [{"name": "x", "analytic": "identity"}]}))
    code, _, err = run(["batch", "--config", str(plan), "--out-dir", str(blocker / "sub")], capsys)
    assert code == 1 and "not writable" in err


def test_batch_small_plan(capsys, tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"datasets": [{"name": "x", "analytic": "identity"}], "instances": {"count": 2},
                                "target_pcts": [10], "bo": {"n_iter": 3}}))
    code, _, _ = run(["batch", "--config", str(plan), "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == [
        "boxplot_dist.csv", "boxplot_iters.csv", "report.json", "runs.csv"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "raar", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "recourse" in proc.stdout
