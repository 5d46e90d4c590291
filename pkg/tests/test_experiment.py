import csv
import io
import json

import pytest

from ttvdespeckle.cli import main
from ttvdespeckle.experiment import ExperimentPlan, PlanError, parse_plan, run_batch, summarize
from ttvdespeckle.solvers import SolverParams

PLAN = """\
# two cells
images = phantom:circle:32
looks = 10
seeds = 42
filters = proposed tdm
param.*.max_iter = 40
param.tdm.k_edge_rel = 0.25
"""


def run(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def test_parse_plan(tmp_path):
    plan = parse_plan(PLAN, tmp_path)
    assert plan.filters == ["proposed", "tdm"]
    assert list(plan.cells()) == [("phantom:circle:32", 10, 42, "proposed"), ("phantom:circle:32", 10, 42, "tdm")]
    assert plan.params_for("tdm").k_edge_rel == 0.25
    assert plan.params_for("proposed").k_edge_rel == SolverParams().k_edge_rel
    assert plan.params_for("tdm", {"max_iter": 5}).max_iter == 5


@pytest.mark.parametrize(
    "text,line",
    [
        ("images = a.pgm\nlooks 10\n", 2),
        ("images = a.pgm\nlooks = ten\nseeds = 1\nfilters = tdm\n", 2),
        ("images = a.pgm\nlooks = 1\nseeds = 1\nfilters = median\n", 4),
        ("images = a.pgm\ncolour = red\n", 2),
        ("images = a.pgm\nlooks = 1\nseeds = 1\nfilters = tdm\nparam.tdm.speed = 3\n", 5),
        ("images = a\nimages = b\n", 2),
    ],
)
def test_plan_errors_carry_line(text, line):
    with pytest.raises(PlanError, match=f"line {line}:"):
        parse_plan(text)


def test_missing_key():
    with pytest.raises(PlanError, match="seeds"):
        parse_plan("images = a\nlooks = 1\nfilters = tdm\n")


def test_empty_lists_rejected():
    with pytest.raises(PlanError):
        ExperimentPlan([], [1], [1], ["tdm"])


def test_batch_rows_and_failures(tmp_path):
    plan = parse_plan(PLAN.replace("phantom:circle:32", "phantom:circle:32 missing.pgm"), tmp_path)
    rows = run_batch(plan)
    assert len(rows) == 4
    assert [r["status"] for r in rows] == ["ok", "ok", "failed", "failed"]
    assert rows[0]["psnr"] > rows[0]["psnr_noisy"]
    assert "missing.pgm" in rows[2]["error"]
    summary = summarize(rows)
    assert len(summary) == 2


def test_parallel_matches_serial(tmp_path):
    plan = parse_plan(PLAN, tmp_path)
    assert run_batch(plan, workers=2) == run_batch(plan)


def test_cli_batch(tmp_path):
    (tmp_path / "plan.txt").write_text(PLAN)
    assert run(["batch", tmp_path / "plan.txt", "--out-dir", tmp_path / "res", "--save-images"]) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "res" / "results.csv").read_text())))
    assert len(rows) == 2 and {r["filter"] for r in rows} == {"proposed", "tdm"}
    report = json.loads((tmp_path / "res" / "report.json").read_text())
    assert len(report["rows"]) == 2
    assert len(list((tmp_path / "res" / "cells").glob("*.pgm"))) == 2


def test_cli_batch_failure_exit_code(tmp_path):
    (tmp_path / "plan.txt").write_text(PLAN.replace("phantom:circle:32", "missing.pgm"))
    assert run(["batch", tmp_path / "plan.txt"]) == 1
    rows = list(csv.DictReader(io.StringIO((tmp_path / "results" / "results.csv").read_text())))
    assert all(r["status"] == "failed" for r in rows)


def test_cli_malformed_plan(tmp_path, capsys):
    (tmp_path / "plan.txt").write_text("images = a\nlooks = 1\nthis line is wrong\n")
    assert run(["batch", tmp_path / "plan.txt"]) == 2
    assert "line 3:" in capsys.readouterr().err


def test_cli_missing_plan(tmp_path):
    assert run(["batch", tmp_path / "none.txt"]) == 2
