import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from halomis.cache import FeatureCache
from halomis.dataset import Dataset
from halomis.features import FEATURE_REGISTRY, JUDGE_FEATURES
from halomis.llm import BackendConfig, MockBackend
from halomis.pipeline import build_feature_table, extract_dataset
from halomis.textstats import TEXTSTAT_FEATURES, TextStatsTransformer, compute_text_stats, sentence_count

from conftest import make_sample


def test_feature_count():
    assert len(TEXTSTAT_FEATURES) == 29 == len(set(TEXTSTAT_FEATURES))


def test_hedge_example():
    s = compute_text_stats("Will this help?", "It might help. Perhaps.")
    assert s["hedge_word_count"] == 2
    assert s["response_sentence_count"] == 2
    assert s["response_word_count"] == 4
    assert s["hedge_ratio"] == 0.5


def test_single_word_guards():
    s = compute_text_stats("ok", "ok")
    assert s["response_sentence_count"] == 1
    assert s["jaccard_word_overlap"] == 1.0
    assert s["len_ratio_response_prompt"] == 1.0
    assert all(math.isfinite(v) for v in s.values())


def test_empty_inputs_finite():
    s = compute_text_stats("", "")
    assert s["avg_word_len"] == 0.0 and s["jaccard_word_overlap"] == 1.0
    assert sentence_count("...") == 1


def test_crisis_and_counts():
    s = compute_text_stats("help", "If you feel suicidal, call 988 now! See https://example.org (today).")
    assert s["crisis_keyword_count"] >= 1
    assert s["url_count"] == 1
    assert s["exclamation_count"] == 1
    assert s["paren_count"] == 2
    assert s["number_token_count"] == 1 and s["digit_count"] == 3


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=200), st.text(max_size=200))
def test_ratios_bounded(prompt, response):
    s = compute_text_stats(prompt, response)
    for name in ("hedge_ratio", "punctuation_ratio", "capitalized_token_ratio", "unique_word_ratio",
                 "stopword_ratio", "jaccard_word_overlap"):
        assert 0.0 <= s[name] <= 1.0, name
    assert all(math.isfinite(v) and v >= 0 for v in s.values())
    assert list(s) == list(TEXTSTAT_FEATURES)


def test_transformer_api():
    t = clone(TextStatsTransformer())
    X = t.fit_transform([("q", "It might help. Perhaps."), make_sample(0)])
    assert X.shape == (2, 29)
    assert X[0, TEXTSTAT_FEATURES.index("hedge_word_count")] == 2
    assert list(t.get_feature_names_out()) == list(TEXTSTAT_FEATURES)


# -- pipeline --------------------------------------------------------------


def _mock():
    return MockBackend(BackendConfig(kind="mock", mock_seed=5))


def test_interrupt_and_resume_match_uninterrupted(tmp_path):
    ds = Dataset([make_sample(i, hal=i % 3 == 0) for i in range(12)])
    full = FeatureCache(tmp_path / "full.jsonl")
    extract_dataset(ds, _mock(), full)

    part = tmp_path / "part.jsonl"
    extract_dataset(Dataset(list(ds)[:5]), _mock(), FeatureCache(part))
    backend = _mock()
    summary = extract_dataset(ds, backend, FeatureCache(part))
    assert part.read_bytes() == (tmp_path / "full.jsonl").read_bytes()
    assert summary.ok and summary.n_calls > 0

    again = extract_dataset(ds, _mock(), FeatureCache(part))
    assert again.n_calls == 0


def test_workers_do_not_change_cache(tmp_path):
    ds = Dataset([make_sample(i) for i in range(10)])
    extract_dataset(ds, _mock(), FeatureCache(tmp_path / "a.jsonl"), workers=1)
    extract_dataset(ds, _mock(), FeatureCache(tmp_path / "b.jsonl"), workers=4)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_feature_table_columns():
    ds = Dataset([make_sample(i) for i in range(4)])
    cache = FeatureCache()
    backend = _mock()
    extract_dataset(ds, backend, cache)
    table = build_feature_table(ds, cache, backend.backend_id)
    assert list(table.columns) == list(JUDGE_FEATURES + FEATURE_REGISTRY + TEXTSTAT_FEATURES)
    assert list(table.index) == ds.ids
    assert not table.isna().any().any()
    llm = table[list(JUDGE_FEATURES + FEATURE_REGISTRY)].to_numpy()
    assert llm.min() >= 1 and llm.max() <= 10


def test_feature_table_missing_is_nan():
    ds = Dataset([make_sample(0)])
    table = build_feature_table(ds, FeatureCache(), "nobody")
    assert table[list(JUDGE_FEATURES)].isna().all().all()
    assert not table[list(TEXTSTAT_FEATURES)].isna().any().any()
