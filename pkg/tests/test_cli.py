import json

import pytest

from mtsp_ldp.cli import main

SPEC = {"d": 8, "T": 30, "n": 1000, "drift": 0.2, "seed": 1}


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SPEC))
    return path


@pytest.mark.parametrize("method", ["mtsp", "lbu", "lsp", "lbd", "lba"])
def test_run_then_audit(method, spec_file, tmp_path, capsys):
    out = tmp_path / method
    assert main(["run", "--method", method, "--epsilon", "1", "--window", "5",
                 "--synthetic", str(spec_file), "--out", str(out)]) == 0
    summary = json.loads((out / "run.json").read_text())
    assert summary["ledger_violations"] == 0 and summary["T"] == 30
    assert main(["audit", "--ledger", str(out)]) == 0
    assert "0 violations" in capsys.readouterr().out


def test_audit_flags_tampered_ledger(spec_file, tmp_path, capsys):
    out = tmp_path / "run"
    main(["run", "--method", "lbu", "--epsilon", "1", "--window", "5", "--synthetic", str(spec_file), "--out", str(out)])
    lines = (out / "ledger.jsonl").read_text().splitlines()
    entry = json.loads(lines[10])
    entry["eps2"], entry["eps2_exact"] = 1.0, "1"
    lines[10] = json.dumps(entry)
    (out / "ledger.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["audit", "--ledger", str(out / "ledger.jsonl")]) == 1
    assert "VIOLATION" in capsys.readouterr().out


def test_query_from_dump(spec_file, tmp_path):
    out = tmp_path / "run"
    main(["run", "--epsilon", "1", "--window", "5", "--synthetic", str(spec_file), "--out", str(out), "--dump-releases"])
    queries = [{"type": "counting", "params": {"v": 2, "delta": 3}, "t": 12},
               {"type": "range", "params": {"v1": 1, "v2": 6, "delta": 5}, "t": 30},
               {"type": "monitor", "params": {"v1": 0, "v2": 3, "lag": 4}, "t": 2}]
    qfile = tmp_path / "q.json"
    qfile.write_text(json.dumps(queries))
    assert main(["query", "--releases", str(out), "--queries", str(qfile), "--out", str(tmp_path / "a.csv")]) == 0
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "query_id,estimate,ground_truth,abs_err,rel_err"
    assert len(rows) == 4
    assert rows[3].startswith("2,,")  # monitor not ready at t=2


def test_grid(tmp_path):
    cfg = {"methods": ["mtsp", "lbu"], "epsilons": [1.0], "windows": [5], "seeds": [0, 1],
           "synthetic": SPEC, "range_tasks": 5, "event": {"value_range": [0, 3]}, "out": str(tmp_path / "g")}
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(cfg))
    assert main(["grid", "--config", str(path)]) == 0
    lines = (tmp_path / "g" / "grid.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("method,epsilon,w")
    assert list((tmp_path / "g").glob("*.svg"))


def test_bad_arguments():
    with pytest.raises(SystemExit):
        main(["run", "--epsilon", "1"])
