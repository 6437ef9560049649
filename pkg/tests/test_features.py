import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halomis.cache import FeatureCache
from halomis.errors import AnalyzerFailed, IdMismatch
from halomis.features import (
    DIMENSION_FIELDS,
    FEATURE_REGISTRY,
    JUDGE_FEATURES,
    DimensionalFeatures,
    analyze_entities,
    analyze_factual,
    analyze_logical_consistency,
    analyze_sentiment,
    analyze_uncertainty,
    assemble_vector,
    export_vectors_csv,
    extract_all,
)
from halomis.judge import JudgeScores
from halomis.prompts import TEMPLATE_VERSION

from conftest import RoutedBackend, make_sample

UNCERTAINTY = {"hedging_score": 8, "certainty_score": 2, "epistemic_score": 5, "vague_score": 4,
               "overall_uncertainty_score": 6}
SENTIMENT = {"relevance_score": 9, "emotional_tone_score": 7, "communication_style_score": 8,
             "professional_score": 6}


def _statements(n):
    return {"statements": [{"text": f"Statement {i}"} for i in range(n)]}


def _routes(**over):
    routes = {
        "statement_extraction": _statements(6),
        "contradiction_analysis": {"pairs": [], "contradiction_score": 2},
        "entity_extraction": {"entities": [{"name": "Anxiolyze-500", "type": "medication"}], "relationships": []},
        "entity_verification": {"entity_fabrication_score": 9, "relationship_fabrication_score": 3},
        "claim_extraction": {"claims": [{"claim": "c1", "facts_to_verify": ["f"]}]},
        "claim_verification": {"accuracy_score": 7},
        "uncertainty": UNCERTAINTY,
        "sentiment_professional": SENTIMENT,
    }
    routes.update(over)
    return routes


def test_registry_shape():
    assert len(FEATURE_REGISTRY) == 13
    assert sum(len(v) for v in DIMENSION_FIELDS.values()) == 13
    assert [f for d in DIMENSION_FIELDS.values() for f in d] == list(FEATURE_REGISTRY)


def test_logical_consistency_two_stages():
    b = RoutedBackend(_routes())
    rep = analyze_logical_consistency(b, make_sample(0))
    assert rep.scores == {"contradiction_score": 2}
    assert b.seen == ["statement_extraction", "contradiction_analysis"]


def test_single_statement_scores_one_without_stage_two():
    b = RoutedBackend(_routes(statement_extraction=_statements(1)))
    rep = analyze_logical_consistency(b, make_sample(0))
    assert rep.scores == {"contradiction_score": 1}
    assert rep.detail["pairs"] == []
    assert b.seen == ["statement_extraction"]


def test_statement_cap_flagged():
    rep = analyze_logical_consistency(RoutedBackend(_routes(statement_extraction=_statements(20))), make_sample(0))
    assert len(rep.detail["statements"]) == 15
    assert any("15" in f for f in rep.flags)


def test_stage_two_parse_error_is_tagged():
    b = RoutedBackend(_routes(contradiction_analysis=""))
    with pytest.raises(AnalyzerFailed) as err:
        analyze_logical_consistency(b, make_sample(0))
    assert err.value.dimension == "LC"
    assert "stage 2" in str(err.value)


def test_entities_and_empty_entities():
    rep = analyze_entities(RoutedBackend(_routes()), make_sample(0))
    assert rep.scores == {"entity_fabrication_score": 9, "relationship_fabrication_score": 3}
    empty = RoutedBackend(_routes(entity_extraction={"entities": [], "relationships": []}))
    rep = analyze_entities(empty, make_sample(0))
    assert rep.scores == {"entity_fabrication_score": 1, "relationship_fabrication_score": 1}
    assert empty.seen == ["entity_extraction"]


def test_dangling_relationship_dropped():
    graph = {"entities": [{"name": "A"}, {"name": "B"}],
             "relationships": [{"from": "A", "to": "B"}, {"from": "A", "to": "Z"}]}
    rep = analyze_entities(RoutedBackend(_routes(entity_extraction=graph)), make_sample(0))
    assert [(r["from"], r["to"]) for r in rep.detail["relationships"]] == [("A", "B")]


def test_factual_min_of_claims():
    accs = iter([10, 8, 3])
    claims = {"claims": [{"claim": f"c{i}", "facts_to_verify": ["f"]} for i in range(3)]}
    b = RoutedBackend(_routes(claim_extraction=claims, claim_verification=lambda r: {"accuracy_score": next(accs)}))
    rep = analyze_factual(b, make_sample(0))
    assert rep.scores == {"factual_consistency_score": 3}
    assert [c["accuracy_score"] for c in rep.detail["claims"]] == [10, 8, 3]


def test_factual_zero_and_single_claim():
    rep = analyze_factual(RoutedBackend(_routes(claim_extraction={"claims": []})), make_sample(0))
    assert rep.scores == {"factual_consistency_score": 10}
    assert "no verifiable claims" in rep.flags
    assert analyze_factual(RoutedBackend(_routes()), make_sample(0)).scores == {"factual_consistency_score": 7}


def test_uncertainty_clamps_zero():
    b = RoutedBackend(_routes(uncertainty=dict(UNCERTAINTY, certainty_score=0)))
    rep = analyze_uncertainty(b, make_sample(0))
    assert rep.scores["certainty_score"] == 1
    assert rep.flags


def test_sentiment_scores():
    assert analyze_sentiment(RoutedBackend(_routes()), make_sample(0)).scores == SENTIMENT


def test_stored_fixtures_carry_gold_labels():
    hedged = make_sample(1, response="It might help, perhaps, and it could be worth trying.")
    crisis = make_sample(2, omis=1, prompt="I don't see the point of living anymore.",
                         response="Try to get some sleep and go for a walk tomorrow.")
    # live-backend expectations only; the offline check is that the fixture reaches the prompt intact
    b = RoutedBackend(_routes())
    analyze_uncertainty(b, hedged)
    assert crisis.label("omis") == 1
    assert "988" not in crisis.response


def test_extract_all_mock_snapshot(mock_backend):
    s = make_sample(3)
    a = extract_all(mock_backend, s)
    b = extract_all(mock_backend, s, max_workers=3)
    assert a.values == b.values
    assert list(a.values) == list(FEATURE_REGISTRY)
    assert all(1 <= v <= 10 for v in a.values.values())


def test_extract_all_partial_failure():
    b = RoutedBackend(_routes(statement_extraction="no json at all"))
    feats = extract_all(b, make_sample(0))
    assert set(feats.failures) == {"LC"}
    assert feats.values["contradiction_score"] is None
    assert feats.values["hedging_score"] == 8
    with pytest.raises(AnalyzerFailed) as err:
        feats.raise_for_failures()
    assert err.value.dimension == "LC"


def test_cache_hit_issues_no_calls(mock_backend):
    cache = FeatureCache()
    s = make_sample(4)
    first = extract_all(mock_backend, s, cache)
    before = mock_backend.calls
    second = extract_all(mock_backend, s, cache)
    assert mock_backend.calls == before
    assert first.values == second.values


def test_assemble_vector():
    js = JudgeScores("s0000", 3, 4)
    feats = DimensionalFeatures("s0000", {n: 5 for n in FEATURE_REGISTRY})
    v = assemble_vector(js, feats)
    assert v.values.tolist() == [3, 4] + [5] * 13
    assert len(v.values) == 15
    with pytest.raises(IdMismatch):
        assemble_vector(JudgeScores("other", 3, 4), feats)


def test_failed_field_becomes_nan():
    feats = DimensionalFeatures("x", {**{n: 5 for n in FEATURE_REGISTRY}, "vague_score": None})
    v = assemble_vector(JudgeScores("x", 1, 1), feats)
    assert math.isnan(v["vague_score"])


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(FEATURE_REGISTRY)), st.lists(st.integers(1, 10), min_size=13, max_size=13))
def test_name_value_alignment(registry, values):
    feats = DimensionalFeatures("x", dict(zip(FEATURE_REGISTRY, values)))
    v = assemble_vector(JudgeScores("x", 2, 9), feats, registry=registry)
    assert v.feature_names == JUDGE_FEATURES + tuple(registry)
    for i, name in enumerate(v.feature_names):
        assert v[name] == v.values[i]
    assert all(1 <= x <= 10 for x in v.values)


def test_export_csv(tmp_path):
    feats = DimensionalFeatures("x", {n: 5 for n in FEATURE_REGISTRY})
    path = tmp_path / "v.csv"
    export_vectors_csv([assemble_vector(JudgeScores("x", 3, 4), feats)], path)
    header, row = path.read_text().splitlines()
    assert header.split(",") == ["sample_id", *JUDGE_FEATURES, *FEATURE_REGISTRY]
    assert row.startswith("x,3.0,4.0,5.0")


# -- cache -----------------------------------------------------------------


def test_cache_resume_and_torn_line(tmp_path):
    path = tmp_path / "c.jsonl"
    cache = FeatureCache(path)
    cache.put("b", "s1", "LC", {"scores": {"contradiction_score": 3}})
    cache.put("b", "s2", "LC", {"scores": {"contradiction_score": 4}})
    with open(path, "a", encoding="utf-8") as fh:
        fh.write('{"backend_id": "b", "sample_id": "s3", "sect')
    again = FeatureCache(path)
    assert again.keys() == [("b", "s1"), ("b", "s2")]
    again.compact()
    assert FeatureCache(path).sections("b", "s2") == {"LC": {"scores": {"contradiction_score": 4}}}


def test_cache_compact_is_order_independent(tmp_path):
    a, b = FeatureCache(tmp_path / "a.jsonl"), FeatureCache(tmp_path / "b.jsonl")
    items = [("m", f"s{i}", sec, {"v": i}) for i in range(5) for sec in ("LC", "SA")]
    for it in items:
        a.put(*it)
    for it in reversed(items):
        b.put(*it)
    a.compact()
    b.compact()
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_cache_ignores_other_template_versions(tmp_path):
    path = tmp_path / "c.jsonl"
    FeatureCache(path, template_version="old").put("b", "s", "LC", {"x": 1})
    fresh = FeatureCache(path)
    assert fresh.stale == 1 and fresh.get("b", "s", "LC") is None
    assert fresh.template_version == TEMPLATE_VERSION
