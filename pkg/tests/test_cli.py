from __future__ import annotations

import json

import pytest

from cgsnn import cli


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_data(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "gen-data", "--n-per-task", "5", "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["trials"] == 10
    lines = (tmp_path / "curriculum.csv").read_text().splitlines()
    assert lines[0] == "index,context,branch,leaf,reward,congruent" and len(lines) == 11
    assert len((tmp_path / "templates.csv").read_text().splitlines()) == 51


def test_train_then_analyze_matches_run(tmp_path, capsys):
    flags = ["--model", "single", "--method", "stdp", "--n_per_task", "40"]
    assert run_cli(capsys, "run", *flags, "--out", str(tmp_path / "r"))[0] == 0
    assert run_cli(capsys, "train", *flags, "--out", str(tmp_path / "t"))[0] == 0
    assert run_cli(capsys, "analyze", str(tmp_path / "t"))[0] == 0
    a = json.loads((tmp_path / "r" / "manifest.json").read_text())
    b = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert a["files"] == b["files"]


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nmodel = single\nmethod = vanilla\nn_per_task = 20\nD = 3\n")
    code, out, _ = run_cli(capsys, "run", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "o"))
    assert code == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 3 and manifest["config"]["D"] == 3


def test_sweep(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "sweep", "--model", "single", "--method", "stdp", "--n-per-task", "20",
        "--axis", "schedule", "--values", "1x1,2x2", "--out", str(tmp_path),
    )
    assert code == 0
    assert out.splitlines()[0].startswith("schedule,n,")
    assert len(out.splitlines()) == 3


@pytest.mark.parametrize(
    "argv, category",
    [
        (["bogus"], "usage"),
        (["run", "--seed", "abc"], "usage"),
        (["reproduce", "fig99"], "usage"),
        (["run", "--model", "single", "--method", "cg"], "config"),
        (["run", "--sluggish", "2"], "config"),
        (["analyze", "/nonexistent/dir"], "io"),
    ],
)
def test_error_categories(capsys, argv, category):
    code, _, err = run_cli(capsys, *argv)
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == category
    assert code == cli.EXIT_CODES[category]


def test_bad_config_file(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--config", str(tmp_path / "missing.ini"))
    assert code == cli.EXIT_CODES["io"]


def test_diverged(monkeypatch, tmp_path, capsys):
    from cgsnn import experiments, multi

    def boom(cfg, curriculum=None):
        raise multi.DivergedLoss("non-finite loss nan")

    monkeypatch.setattr(experiments, "train", boom)
    code, _, err = run_cli(capsys, "run", "--out", str(tmp_path))
    assert code == cli.EXIT_CODES["diverged"]
    assert json.loads(err)["error"] == "diverged"


def test_reproduce_writes_report(tmp_path, capsys, monkeypatch):
    from cgsnn import reproduce

    def fake(seeds):
        return reproduce.FigureReport("fig2", {"t.csv": "a\n1\n"}, {"x": 1.0}, [reproduce.Check("c", False, "d")])

    monkeypatch.setitem(reproduce._FIGURES, "fig2", fake)
    code, out, _ = run_cli(capsys, "reproduce", "fig2", "--out", str(tmp_path))
    assert code == 0 and "FAIL  c: d" in out
    checks = json.loads((tmp_path / "fig2" / "checks.json").read_text())
    assert checks["passed"] is False
    assert run_cli(capsys, "reproduce", "fig2", "--out", str(tmp_path), "--strict")[0] == 1
