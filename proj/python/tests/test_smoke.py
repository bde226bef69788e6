import json
from pathlib import Path

import jsonschema
import pytest

import evade

SCHEMA = Path(__file__).resolve().parents[2] / "schemas" / "report.schema.json"


@pytest.fixture(scope="module")
def corpus():
    return evade.generate_synthetic(60, seed=3)


@pytest.fixture(scope="module")
def context(corpus):
    return evade.derive_context(corpus, seed=5)


def malware(corpus):
    return next(r for r in corpus if r["label"] == "malicious")


def test_names_and_keys():
    names = evade.mutation_names()
    assert len(names) == 12
    assert names[11] == "change_signature"
    assert evade.canonical_key([11, 6, 6]) == "6,6,11"


def test_generation_is_seeded(corpus):
    assert evade.generate_synthetic(60, seed=3) == corpus
    assert sum(r["label"] == "malicious" for r in corpus) == 60


def test_apply_path(corpus, context):
    s = malware(corpus)
    s["has_signature"] = False
    out = evade.apply_path(s, [6, 6, 11], context)
    assert out["file_size"] == s["file_size"] + 256
    assert out["has_signature"] is True
    assert len(evade.allowed_mutations(s, context)) >= 10
    with pytest.raises(evade.MutationError, match="precondition failed"):
        evade.apply_path(out, [11], context)


def test_search_with_a_callable(corpus, context):
    s = malware(corpus)
    s["has_signature"] = False
    found = evade.search_mcts(s, lambda r: r["has_signature"], context, iterations=200, seed=1)
    assert found["found"]
    assert found["path"] == [11]
    assert found["telemetry"]["iterations_used"] >= 1
    rnd = evade.search_random(s, lambda r: r["has_signature"], context, query_budget=50, seed=1)
    if rnd["found"]:
        assert 11 in rnd["path"]
    never = evade.search_random(s, lambda r: False, context, attempts=3)
    assert not never["found"]


def test_bad_mode_is_a_config_error(corpus, context):
    with pytest.raises(evade.ConfigError):
        evade.search_mcts(malware(corpus), lambda r: False, context, backprop="sometimes")


def test_auc_and_stats():
    assert evade.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    stats = evade.mutation_stats([[11], [11, 3], [3, 3]])
    sig = stats[11]
    assert (sig["alone"], sig["in_group"], sig["affected_instances"]) == (1, 1, 2)
    assert stats[3]["repeats"] == 1


def test_run_experiment_and_model(tmp_path):
    config = {
        "seed": 4,
        "synthetic_count_per_class": 120,
        "mlp": {"hidden": [16, 8], "epochs": 2},
        "mcts": {"iterations": 60},
        "max_targets": 10,
        "output_dir": str(tmp_path),
    }
    report = evade.run_experiment(config)
    jsonschema.validate(report, json.loads(SCHEMA.read_text()))
    assert [e["engine"] for e in report["engines"]] == ["mcts", "random"]

    model = evade.Model(json.loads((tmp_path / "preprocessor.json").read_text()),
                        json.loads((tmp_path / "surrogate.json").read_text()))
    context = json.loads((tmp_path / "context.json").read_text())
    corpus = {r["sample_id"]: r for r in evade.generate_synthetic(120, report["seeds"]["data"])}
    for line in (tmp_path / "paths_mcts.jsonl").read_text().splitlines():
        p = json.loads(line)
        if p["surrogate_benign"]:
            mutated = evade.apply_path(corpus[p["sample_id"]], p["path"], context)
            assert model.is_benign(mutated)
            assert 0.0 <= model.malicious_probability(mutated) < 0.5


def test_unknown_config_key():
    with pytest.raises(evade.ConfigError):
        evade.run_experiment({"seeed": 1})
