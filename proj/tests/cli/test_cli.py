import json

import jsonschema
import pytest

SMALL = ["--count-per-class", 120, "--epochs", 2, "--iterations", 60, "--max-targets", 12, "--workers", 2, "--quiet"]


def lines(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def test_help_exits_zero(evade):
    r = evade("--help")
    assert r.returncode == 0
    assert "run-all" in r.stdout


def test_unknown_option_is_a_config_error(evade):
    assert evade("run-all", "--bogus").returncode == 2


def test_unknown_engine_is_a_config_error(evade, tmp_path):
    r = evade("run-all", "--engine", "beam", "--out-dir", tmp_path)
    assert r.returncode == 2


def test_unknown_config_key_is_a_config_error(evade, tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"seeed": 1}))
    r = evade("run-all", "--config", cfg, "--out-dir", tmp_path / "out")
    assert r.returncode == 2
    assert "config error" in r.stderr


def test_invalid_config_value_is_a_config_error(evade, tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"mcts": {"iterations": 0}}))
    assert evade("run-all", "--config", cfg, "--out-dir", tmp_path / "out").returncode == 2


def test_missing_data_is_a_stage_failure(evade, tmp_path):
    r = evade("run-all", "--data", tmp_path / "absent.jsonl", "--out-dir", tmp_path / "out", "--quiet")
    assert r.returncode == 3


def test_gen_data_writes_both_classes(evade, tmp_path):
    out = tmp_path / "corpus.jsonl"
    r = evade("gen-data", "--count-per-class", 25, "--seed", 4, "--out", out)
    assert r.returncode == 0, r.stderr
    records = lines(out)
    assert len(records) == 50
    assert [rec["label"] for rec in records].count("malicious") == 25


def test_gen_data_is_seeded(evade, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    evade("gen-data", "--count-per-class", 10, "--seed", 9, "--out", a)
    evade("gen-data", "--count-per-class", 10, "--seed", 9, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_run_all_report_matches_schema(evade, tmp_path, report_schema):
    out = tmp_path / "run"
    r = evade("run-all", "--seed", 2, "--out-dir", out, *SMALL)
    assert r.returncode == 0, r.stderr
    report = json.loads((out / "report.json").read_text())
    jsonschema.validate(report, report_schema)
    for engine in report["engines"]:
        assert engine["mutated"] + engine["failed"] == engine["malware_total"]
        assert engine["invalid_paths"] == 0
        assert engine["replay_mismatches"] == 0
    for name in ["report.md", "paths_mcts.jsonl", "paths_random.jsonl", "stats_mcts.csv", "histogram_random.csv"]:
        assert (out / name).exists()


def test_run_all_twice_is_byte_identical(evade, tmp_path):
    out = tmp_path / "run"
    evade("run-all", "--seed", 5, "--out-dir", out, *SMALL)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    evade("run-all", "--seed", 5, "--out-dir", out, *SMALL)
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second


def test_stage_by_stage_pipeline(evade, tmp_path, report_schema):
    d = tmp_path
    r = evade("gen-data", "--count-per-class", 150, "--seed", 3, "--defender-out", d / "def.jsonl",
              "--attacker-out", d / "att.jsonl")
    assert r.returncode == 0, r.stderr
    r = evade("train-victim", "--data", d / "def.jsonl", "--preprocessor-out", d / "pre.json", "--out",
              d / "victim.json", "--epochs", 2, "--hidden", 16, 8)
    assert r.returncode == 0, r.stderr
    r = evade("train-surrogate", "--data", d / "att.jsonl", "--preprocessor", d / "pre.json", "--out",
              d / "surrogate.json", "--context-out", d / "ctx.json")
    assert r.returncode == 0, r.stderr
    for engine in ["mcts", "random"]:
        r = evade("search", "--engine", engine, "--data", d / "att.jsonl", "--preprocessor", d / "pre.json",
                  "--surrogate", d / "surrogate.json", "--context", d / "ctx.json", "--out",
                  d / f"paths_{engine}.jsonl", "--iterations", 60, "--max-targets", 10)
        assert r.returncode == 0, r.stderr
        paths = lines(d / f"paths_{engine}.jsonl")
        assert 0 < len(paths) <= 10
        assert all(p["found_by"] == engine for p in paths)
    r = evade("apply", "--data", d / "att.jsonl", "--paths", d / "paths_mcts.jsonl", "--context", d / "ctx.json",
              "--out", d / "mutated.jsonl")
    assert r.returncode == 0, r.stderr
    r = evade("evaluate", "--data", d / "mutated.jsonl", "--preprocessor", d / "pre.json", "--model",
              d / "surrogate.json")
    assert r.returncode == 0, r.stderr


@pytest.mark.parametrize("fmt", ["json", "markdown", "csv"])
def test_report_rerenders(evade, tmp_path, fmt):
    run = tmp_path / "run"
    assert evade("run-all", "--seed", 1, "--out-dir", run, *SMALL).returncode == 0
    out = tmp_path / fmt
    r = evade("report", "--input", run / "report.json", "--format", fmt, "--out-dir", out)
    assert r.returncode == 0, r.stderr
    if fmt == "json":
        assert json.loads((out / "report.json").read_text()) == json.loads((run / "report.json").read_text())
    if fmt == "markdown":
        assert (out / "report.md").read_bytes() == (run / "report.md").read_bytes()
    if fmt == "csv":
        assert (out / "stats_mcts.csv").read_bytes() == (run / "stats_mcts.csv").read_bytes()


def test_search_without_required_options(evade):
    assert evade("search", "--engine", "mcts").returncode == 2
