import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from stacksql.cli import main
from stacksql.datafiles import toy_corpus_path, toy_tables_path


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def tiny_checkpoints(workdir):
    """A fast, tiny training run shared by the decode tests."""
    out = workdir / "ckpt"
    rc = main(
        [
            "train",
            "--corpus", toy_corpus_path(),
            "--tables", toy_tables_path(),
            "--out-dir", str(out),
            "--epochs", "2",
            "--hidden-dim", "8",
            "--seed", "3",
        ]
    )
    assert rc == 0
    return out


def test_train_writes_artifacts(tiny_checkpoints):
    files = {p.name for p in tiny_checkpoints.iterdir()}
    assert "train_summary.json" in files
    assert "col.npz" in files and "col_loss.csv" in files
    summary = json.loads((tiny_checkpoints / "train_summary.json").read_text())
    assert summary["config"]["seed"] == 3
    assert summary["corpus_used"] == summary["corpus_rows"]


def test_decode_writes_sql_lines(tiny_checkpoints, workdir):
    questions = workdir / "questions.jsonl"
    questions.write_text(
        json.dumps({"db_id": "weather", "question": "show the city names"}) + "\n"
        + json.dumps({"db_id": "college", "question": "show the name of instructors"}) + "\n"
    )
    out = workdir / "preds.txt"
    trace = workdir / "trace.jsonl"
    rc = main(
        [
            "decode",
            "--tables", toy_tables_path(),
            "--questions", str(questions),
            "--checkpoints", str(tiny_checkpoints),
            "--out", str(out),
            "--trace", str(trace),
            "--hidden-dim", "8",
            "--seed", "3",
        ]
    )
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2
    assert all(line.startswith("SELECT") for line in lines)
    trace_lines = trace.read_text().splitlines()
    assert "config" in json.loads(trace_lines[0])
    step_rec = json.loads(trace_lines[1])
    assert step_rec["steps"][0]["module"] == "iuen"


def test_eval_reflexive_gold(workdir):
    gold = workdir / "gold.jsonl"
    rows = []
    with open(toy_corpus_path()) as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    gold.write_text("".join(json.dumps(r) + "\n" for r in rows))
    pred = workdir / "pred.txt"
    pred.write_text("".join(r["query"] + "\n" for r in rows))
    report_path = workdir / "report.json"
    rc = main(
        [
            "eval",
            "--gold", str(gold),
            "--pred", str(pred),
            "--tables", toy_tables_path(),
            "--report", str(report_path),
            "--text-table",
        ]
    )
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert report["exact_match"] == 1.0
    for comp in report["component_f1"].values():
        assert comp["f1"] == 1.0
    assert report["hardness_thresholds"]["easy_max"] == 1


def test_eval_length_mismatch_is_data_error(workdir):
    gold = workdir / "gold2.jsonl"
    gold.write_text(json.dumps({"db_id": "weather", "question": "q", "query": "SELECT city_name FROM city"}) + "\n")
    pred = workdir / "pred2.txt"
    pred.write_text("SELECT city_name FROM city\nSELECT city_name FROM city\n")
    rc = main(
        [
            "eval",
            "--gold", str(gold),
            "--pred", str(pred),
            "--tables", toy_tables_path(),
            "--report", str(workdir / "r.json"),
        ]
    )
    assert rc == 1


def test_augment_generates_corpus(workdir):
    out = workdir / "aug.jsonl"
    rc = main(
        [
            "augment",
            "--tables", toy_tables_path(),
            "--out", str(out),
            "--per-table", "3",
            "--seed", "5",
        ]
    )
    assert rc == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows
    meta = json.loads((Path(str(out) + ".meta.json")).read_text())
    assert meta["generated"] == len(rows)
    assert meta["config"]["seed"] == 5


def test_augment_reproducible(workdir):
    a = workdir / "aug_a.jsonl"
    b = workdir / "aug_b.jsonl"
    for out in (a, b):
        rc = main(
            ["augment", "--tables", toy_tables_path(), "--out", str(out), "--per-table", "2", "--seed", "9"]
        )
        assert rc == 0
    assert a.read_text() == b.read_text()


def test_augment_mine_corpus(workdir):
    review = workdir / "candidates.json"
    rc = main(
        [
            "augment",
            "--tables", toy_tables_path(),
            "--mine-corpus", toy_corpus_path(),
            "--review", str(review),
        ]
    )
    assert rc == 0
    data = json.loads(review.read_text())
    assert data["patterns"]
    assert data["stats"]


def test_usage_error_exit_code():
    proc = subprocess.run(
        [sys.executable, "-m", "stacksql.cli", "bogus-subcommand"],
        capture_output=True,
    )
    assert proc.returncode == 2


def test_missing_file_is_data_error(workdir):
    rc = main(
        [
            "eval",
            "--gold", "/nonexistent.jsonl",
            "--pred", "/nonexistent.txt",
            "--tables", "/nonexistent.json",
            "--report", str(workdir / "x.json"),
        ]
    )
    assert rc == 1
