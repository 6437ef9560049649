"""Rule-based combination, voting, multi-LLM score aggregation and binary-logit features."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import AllBackendsFailed, EmptyVote, HalomisError, TooFewBackends
from .llm import ask_structured
from .prompts import get_template
from .scores import clamp_score
from .textstats import compute_text_stats

log = logging.getLogger(__name__)

MULTI_DIMENSIONS = (
    "hallucination",
    "omission",
    "therapist_impersonation",
    "human_likeness",
    "contradiction",
    "relevance",
)
MULTI_STATS = ("mean", "weighted_mean", "binary_probability", "std", "agreement_rate", "max")
MULTI_AGG_FEATURES = tuple(f"{d}__{s}" for d in MULTI_DIMENSIONS for s in MULTI_STATS)
BINARY_LOGIT_FEATURES = ("logit_probability", "response_char_len", "response_word_count")
DEFAULT_BINARIZE_THRESHOLD = 5


def rule_combine(judge_flag, ml_flag, mode: str) -> int:
    if mode == "OR":
        return int(bool(judge_flag) or bool(ml_flag))
    if mode == "AND":
        return int(bool(judge_flag) and bool(ml_flag))
    raise ValueError(f"mode must be 'OR' or 'AND', got {mode!r}")


class Vote(NamedTuple):
    value: int
    tie: bool


def majority_vote(flags) -> Vote:
    """Majority of 0/1 flags; an even split resolves to 1 and sets ``tie``."""
    flags = [int(bool(f)) for f in flags]
    if not flags:
        raise EmptyVote("no votes")
    ones = sum(flags)
    zeros = len(flags) - ones
    if ones == zeros:
        return Vote(1, True)
    return Vote(int(ones > zeros), False)


@dataclass
class MultiJudgeScores:
    sample_id: str
    # backend_id -> {dimension: score}
    scores: dict
    absent: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def backends(self) -> list:
        return list(self.scores)


def query_multi_judge(backend, sample) -> dict:
    template = get_template("multi_llm_judge")
    text = template.render({"prompt": sample.prompt, "response": sample.response})
    record, _ = ask_structured(backend, text, template.required_fields, sample_id=sample.id)
    out = {}
    for dim in MULTI_DIMENSIONS:
        value, clamped = clamp_score(record[dim])
        if clamped:
            log.warning("sample %s backend %s: %s clamped to %s", sample.id, backend.backend_id, dim, value)
        out[dim] = value
    return out


def multi_llm_scores(backends, sample, cache=None) -> MultiJudgeScores:
    """Six-dimension scores from every backend; failing backends are marked absent."""
    if len(backends) < 2:
        raise TooFewBackends("multi-LLM scoring needs at least 2 backends")
    scores, absent, warnings = {}, [], []
    for backend in backends:
        bid = backend.backend_id
        try:
            hit = cache.get(bid, sample.id, "multi_llm_judge") if cache is not None else None
            if hit is None:
                hit = query_multi_judge(backend, sample)
                if cache is not None:
                    cache.put(bid, sample.id, "multi_llm_judge", hit)
            scores[bid] = hit
        except HalomisError as exc:
            absent.append(bid)
            warnings.append(f"{bid}: {exc}")
            log.warning("sample %s: backend %s failed: %s", sample.id, bid, exc)
    if not scores:
        raise AllBackendsFailed(f"all {len(backends)} backends failed for sample {sample.id}")
    return MultiJudgeScores(sample.id, scores, absent, warnings)


@dataclass
class AggregatedFeatures:
    sample_id: str
    # MULTI_AGG_FEATURES -> value
    aggregated: dict
    # "indiv__<backend>__<dimension>" and "...__flag" -> value
    individual: dict

    def as_dict(self) -> dict:
        return {**self.aggregated, **self.individual}


def aggregate_multi(scores: MultiJudgeScores, binarize_threshold=DEFAULT_BINARIZE_THRESHOLD,
                    weights: Optional[dict] = None) -> AggregatedFeatures:
    """Per-dimension statistics over backends.

    ``binary_probability`` is the fraction of backends scoring at least
    ``binarize_threshold``; ``agreement_rate`` the fraction of backend pairs
    whose binarized flags agree; ``std`` is the population deviation.
    """
    backends = sorted(scores.scores)
    if len(backends) < 2:
        raise TooFewBackends("aggregation needs at least 2 backends with scores")
    w = np.array([1.0 if weights is None else float(weights.get(b, 1.0)) for b in backends])
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with positive sum")
    aggregated, individual = {}, {}
    for dim in MULTI_DIMENSIONS:
        x = np.array([float(scores.scores[b][dim]) for b in backends])
        flags = (x >= binarize_threshold).astype(int)
        pairs = list(itertools.combinations(range(len(backends)), 2))
        agree = sum(flags[i] == flags[j] for i, j in pairs) / len(pairs)
        mean = float(x.mean())
        stats = {
            "mean": mean,
            "weighted_mean": mean if weights is None else float(np.dot(w, x) / w.sum()),
            "binary_probability": float(flags.mean()),
            "std": float(np.sqrt(np.mean((x - mean) ** 2))),
            "agreement_rate": float(agree),
            "max": float(x.max()),
        }
        for s in MULTI_STATS:
            aggregated[f"{dim}__{s}"] = stats[s]
        for b, v, fl in zip(backends, x, flags):
            individual[f"indiv__{b}__{dim}"] = float(v)
            individual[f"indiv__{b}__{dim}__flag"] = float(fl)
    return AggregatedFeatures(scores.sample_id, aggregated, individual)


@dataclass
class BinaryLogitFeatures:
    sample_id: str
    probability: float
    response_char_len: float
    response_word_count: float
    clamped: bool = False

    def as_dict(self) -> dict:
        return dict(zip(BINARY_LOGIT_FEATURES, (self.probability, self.response_char_len, self.response_word_count)))


def query_binary_logit(backend, sample) -> dict:
    template = get_template("binary_logit")
    text = template.render({"prompt": sample.prompt, "response": sample.response})
    record, raw = ask_structured(backend, text, template.required_fields, sample_id=sample.id)
    prob, clamped = clamp_score(record["hallucination_probability"], 0.0, 1.0, integer=False)
    return {"probability": prob, "clamped": clamped, "raw_text": raw}


def binary_logit_features(backend, sample, cache=None) -> BinaryLogitFeatures:
    hit = cache.get(backend.backend_id, sample.id, "binary_logit") if cache is not None else None
    if hit is None:
        hit = query_binary_logit(backend, sample)
        if cache is not None:
            cache.put(backend.backend_id, sample.id, "binary_logit", hit)
    if hit["clamped"]:
        log.warning("sample %s: binary-logit probability clamped to %s", sample.id, hit["probability"])
    stats = compute_text_stats(sample.prompt, sample.response)
    return BinaryLogitFeatures(sample.id, float(hit["probability"]), stats["response_char_len"],
                               stats["response_word_count"], bool(hit["clamped"]))
