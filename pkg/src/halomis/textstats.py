"""Surface text statistics: the 29-feature non-LLM baseline."""
from __future__ import annotations

import re
import unicodedata
from functools import lru_cache
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

TEXTSTAT_FEATURES = (
    "response_char_len",
    "response_word_count",
    "response_sentence_count",
    "avg_word_len",
    "avg_sentence_len",
    "hedge_word_count",
    "hedge_ratio",
    "certainty_word_count",
    "negation_count",
    "modal_verb_count",
    "first_person_count",
    "second_person_count",
    "question_mark_count",
    "exclamation_count",
    "punctuation_ratio",
    "comma_count",
    "colon_semicolon_count",
    "paren_count",
    "quote_count",
    "digit_count",
    "number_token_count",
    "capitalized_token_ratio",
    "unique_word_ratio",
    "stopword_ratio",
    "url_count",
    "prompt_word_count",
    "len_ratio_response_prompt",
    "jaccard_word_overlap",
    "crisis_keyword_count",
)
TEXTSTATS_VERSION = "1"

_TOKEN = re.compile(r"\w+(?:['’-]\w+)*")
_SENTENCE_END = re.compile(r"[.!?]+")
_URL = re.compile(r"https?://\S+|www\.\S+", re.IGNORECASE)
_NUMBER = re.compile(r"\d+")
_QUOTES = set('"“”«»')


def tokenize(text: str) -> list:
    return _TOKEN.findall(text)


def sentence_count(text: str) -> int:
    """Non-empty segments between ``.``, ``!`` and ``?``; at least 1."""
    parts = [p for p in _SENTENCE_END.split(text) if _TOKEN.search(p)]
    return max(1, len(parts))


@lru_cache(maxsize=None)
def load_lexicon(name: str) -> frozenset:
    """Lexicon entries as token tuples; '#' starts a comment."""
    text = (resources.files(__package__) / "lexicons" / f"{name}.txt").read_text(encoding="utf-8")
    entries = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            entries.add(tuple(tokenize(line)))
    return frozenset(e for e in entries if e)


def count_phrases(tokens: list, lexicon: frozenset) -> int:
    """Greedy longest-match, non-overlapping count of lexicon entries in ``tokens``."""
    if not tokens or not lexicon:
        return 0
    lengths = sorted({len(e) for e in lexicon}, reverse=True)
    i, hits = 0, 0
    while i < len(tokens):
        for n in lengths:
            if tuple(tokens[i : i + n]) in lexicon:
                hits += 1
                i += n
                break
        else:
            i += 1
    return hits


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def compute_text_stats(prompt: str, response: str) -> dict:
    """All 29 statistics for one prompt/response pair, in ``TEXTSTAT_FEATURES`` order."""
    tokens = tokenize(response)
    lower = [t.lower() for t in tokens]
    prompt_lower = [t.lower() for t in tokenize(prompt)]
    n_words = len(tokens)
    n_sent = sentence_count(response)
    punct = sum(1 for ch in response if unicodedata.category(ch).startswith("P"))
    resp_set, prompt_set = set(lower), set(prompt_lower)
    union = resp_set | prompt_set
    hedges = count_phrases(lower, load_lexicon("hedge"))
    stats = {
        "response_char_len": len(response),
        "response_word_count": n_words,
        "response_sentence_count": n_sent,
        "avg_word_len": _ratio(sum(len(t) for t in tokens), n_words),
        "avg_sentence_len": n_words / n_sent,
        "hedge_word_count": hedges,
        "hedge_ratio": _ratio(hedges, n_words),
        "certainty_word_count": count_phrases(lower, load_lexicon("certainty")),
        "negation_count": count_phrases(lower, load_lexicon("negation")),
        "modal_verb_count": count_phrases(lower, load_lexicon("modal")),
        "first_person_count": count_phrases(lower, load_lexicon("first_person")),
        "second_person_count": count_phrases(lower, load_lexicon("second_person")),
        "question_mark_count": response.count("?"),
        "exclamation_count": response.count("!"),
        "punctuation_ratio": _ratio(punct, len(response)),
        "comma_count": response.count(","),
        "colon_semicolon_count": response.count(":") + response.count(";"),
        "paren_count": response.count("(") + response.count(")"),
        "quote_count": sum(1 for ch in response if ch in _QUOTES),
        "digit_count": sum(1 for ch in response if ch.isdigit()),
        "number_token_count": sum(1 for t in tokens if _NUMBER.fullmatch(t)),
        "capitalized_token_ratio": _ratio(sum(1 for t in tokens if t[0].isupper()), n_words),
        "unique_word_ratio": _ratio(len(resp_set), n_words),
        "stopword_ratio": _ratio(sum(1 for t in lower if (t,) in load_lexicon("stopwords")), n_words),
        "url_count": len(_URL.findall(response)),
        "prompt_word_count": len(prompt_lower),
        "len_ratio_response_prompt": n_words / max(len(prompt_lower), 1),
        "jaccard_word_overlap": len(resp_set & prompt_set) / len(union) if union else 1.0,
        "crisis_keyword_count": count_phrases(lower, load_lexicon("crisis")),
    }
    return {name: float(stats[name]) for name in TEXTSTAT_FEATURES}


class TextStatsTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer from ``(prompt, response)`` pairs to the 29 statistics."""

    def fit(self, X, y=None):
        self.n_features_out_ = len(TEXTSTAT_FEATURES)
        return self

    def transform(self, X):
        rows = []
        for item in X:
            prompt, response = (item.prompt, item.response) if hasattr(item, "response") else item
            stats = compute_text_stats(prompt, response)
            rows.append([stats[n] for n in TEXTSTAT_FEATURES])
        return np.array(rows, dtype=float).reshape(len(rows), len(TEXTSTAT_FEATURES))

    def get_feature_names_out(self, input_features=None):
        return np.array(TEXTSTAT_FEATURES, dtype=object)
