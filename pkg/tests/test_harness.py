import csv
import io
import json
import statistics

import pytest

from raar.errors import ExperimentDegraded, PlanError
from raar.harness import (
    BOX_COLUMNS,
    RUN_COLUMNS,
    ExperimentPlan,
    aggregate,
    plan_runs,
    render_outputs,
    run_experiment,
    run_seed,
    run_single,
    stable_hash,
)

FAST_BO = {"n_init": 4, "n_iter": 6, "n_candidates": 64}


def small_plan(**kw):
    d = {
        "seed": 3,
        "datasets": [{"name": "id", "analytic": "identity"}, {"name": "ix", "analytic": "interaction"}],
        "instances": {"count": 2, "seed": 1},
        "target_pcts": [10, 50],
        "bo": FAST_BO,
    }
    d.update(kw)
    return ExperimentPlan.from_dict(d)


def row(arm, inst, dy=0.0, phi=0.5, cost=1.0, iters=10, comparison="target", pct=10):
    return {"dataset": "d", "instance": inst, "comparison": comparison, "arm": arm, "mode": f"{comparison}-{arm}",
            "target_pct": pct, "seed": 0, "error": None, "delta_y_pct": dy, "phi": phi, "cost": cost, "iters": iters}


def test_aggregate_two_point_statistics():
    rep = aggregate([row("y", 0, dy=10), row("y", 1, dy=20)])
    arm = rep["arms"][0]
    assert arm["delta_y_pct_mean"] == 15
    assert arm["delta_y_pct_sd"] == pytest.approx(7.0710678, abs=1e-6)


def test_aggregate_paired_deltas():
    rows = [row("y", 0, cost=2.0, iters=40), row("rel", 0, cost=1.9, iters=40)]
    comp = next(c for c in aggregate(rows)["comparisons"] if c["dataset"] == "d")
    assert comp["delta_d_pct"] == pytest.approx(-5.0)
    assert comp["delta_it_pct"] == 0


def test_aggregate_single_row_sd_flagged():
    arm = aggregate([row("y", 0)])["arms"][0]
    assert arm["delta_y_pct_sd"] == 0.0
    assert "single_row_sd:delta_y_pct" in arm["flags"]


def test_pairs_only_over_complete_pairs():
    rows = [row("y", 0, iters=10), row("rel", 0, iters=5), row("y", 1, iters=1000)]
    comp = next(c for c in aggregate(rows)["comparisons"] if c["dataset"] == "d")
    assert comp["n_pairs"] == 1 and comp["delta_it_pct"] == -50.0


def test_swapping_arms_follows_formula():
    rows = [row("y", 0, cost=2.0, iters=30), row("rel", 0, cost=1.5, iters=20),
            row("y", 1, cost=1.0, iters=10), row("rel", 1, cost=0.5, iters=40)]
    swapped = [dict(r, arm={"y": "rel", "rel": "y"}[r["arm"]]) for r in rows]
    a = next(c for c in aggregate(rows)["comparisons"] if c["dataset"] == "d")
    b = next(c for c in aggregate(swapped)["comparisons"] if c["dataset"] == "d")
    y_it, rel_it = statistics.fmean([30, 10]), statistics.fmean([20, 40])
    assert a["delta_it_pct"] == pytest.approx(100 * (rel_it - y_it) / y_it)
    assert b["delta_it_pct"] == pytest.approx(100 * (y_it - rel_it) / rel_it)
    assert a["delta_it_pct"] * b["delta_it_pct"] < 0


def test_empty_plan():
    rep = run_experiment(small_plan(instances={"count": 0}))
    assert rep["arms"] == [] and rep["comparisons"] == [] and not rep["degraded"]


def test_identical_arms_give_zero_deltas():
    plan = small_plan(comparisons=[{"name": "same", "y_mode": "target-y", "rel_mode": "target-y"}])
    rep = run_experiment(plan)
    assert rep["comparisons"]
    for c in rep["comparisons"]:
        assert c["delta_it_pct"] == 0.0 and c["delta_d_pct"] == 0.0


def test_pairs_share_instance_and_seed():
    specs = plan_runs(small_plan())
    by_pair = {}
    for s in specs:
        by_pair.setdefault((s.dataset["name"], s.instance, s.comparison, s.target_pct), []).append(s)
    for pair in by_pair.values():
        assert [s.arm for s in pair] == ["y", "rel"]
        assert pair[0].seed == pair[1].seed
    assert len(specs) == 2 * 2 * (1 + 2) * 2


def test_seed_derivation_is_stable():
    assert stable_hash("a", 1) == stable_hash("a", 1) != stable_hash("a", 2)
    assert run_seed(0, "d", 1, "p") ^ run_seed(5, "d", 1, "p") == 5


def test_outputs_written_and_deterministic(tmp_path):
    plan = small_plan()
    run_experiment(plan, tmp_path / "a")
    run_experiment(plan, tmp_path / "b")
    for name in ("report.json", "runs.csv", "boxplot_iters.csv", "boxplot_dist.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    runs = list(csv.DictReader(io.StringIO((tmp_path / "a" / "runs.csv").read_text())))
    assert list(runs[0]) == RUN_COLUMNS
    assert len(runs) == 24
    box = (tmp_path / "a" / "boxplot_iters.csv").read_text().splitlines()
    assert box[0] == ",".join(BOX_COLUMNS)
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["plan"]["seed"] == 3 and len(rep["runs"]) == 24


def test_run_regenerated_from_recorded_seed(tmp_path):
    plan = small_plan()
    rep = run_experiment(plan)
    specs = {(s.dataset["name"], s.instance, s.comparison, s.arm, s.target_pct): s for s in plan_runs(plan)}
    for r in rep["runs"][:6]:
        spec = specs[(r["dataset"], r["instance"], r["comparison"], r["arm"], r["target_pct"])]
        assert spec.seed == r["seed"]
        again = json.loads(json.dumps(run_single(plan, spec)))
        assert again == r


def test_degraded_experiment_still_writes(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("a,y\n" + "".join(f"{i},{2 * i}\n" for i in range(10)))
    plan = ExperimentPlan.from_dict({
        "datasets": [{"name": "bad", "csv": str(data), "target_col": "y", "model": "external:/nonexistent/cmd"}],
        "instances": {"count": 2},
        "bo": FAST_BO,
    })
    with pytest.raises(ExperimentDegraded):
        run_experiment(plan, tmp_path / "out")
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["degraded"]
    assert all(r["error"].startswith("PredictorProtocolError") for r in rep["runs"])


def test_csv_dataset_with_knn(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("a,b,y\n" + "".join(f"{i},{i % 3},{i + 10 * (i % 3)}\n" for i in range(1, 30)))
    plan = ExperimentPlan.from_dict({
        "datasets": [{"name": "k", "csv": str(data), "target_col": "y", "model": "knn:3"}],
        "instances": {"count": 2},
        "target_pcts": [20],
        "bo": FAST_BO,
    })
    rep = run_experiment(plan)
    assert all(r["error"] is None for r in rep["runs"])


@pytest.mark.parametrize(
    "plan, path",
    [
        ({}, "$"),
        ({"datasets": [{"name": "x"}]}, "$.datasets[0]"),
        ({"datasets": [{"name": "x", "analytic": "identity"}], "target_pcts": [10, 0]}, "$.target_pcts[1]"),
        ({"datasets": [{"name": "x", "analytic": "identity"}], "bo": {"n_iter": -1}}, "$.bo.n_iter"),
        ({"datasets": [{"name": "x", "analytic": "identity"}],
          "comparisons": [{"name": "c", "y_mode": "max-y", "rel_mode": "target-rel"}]}, "$.comparisons[0]"),
    ],
)
def test_plan_validation_paths(plan, path):
    with pytest.raises(PlanError) as info:
        ExperimentPlan.from_dict(plan)
    assert info.value.path == path


def test_plan_load_bad_json(tmp_path):
    p = tmp_path / "plan.json"
    p.write_text("{not json")
    with pytest.raises(PlanError, match="line 1"):
        ExperimentPlan.load(p)


def test_render_handles_failed_rows():
    rows = [row("y", 0), dict(row("rel", 0), error="X: boom", delta_y_pct=None, phi=None, cost=None, iters=None)]
    files = render_outputs(small_plan(), rows)
    assert files["boxplot_iters.csv"].splitlines() == [",".join(BOX_COLUMNS)]
    assert json.loads(files["report.json"])["arms"][1]["n_failed"] == 1
