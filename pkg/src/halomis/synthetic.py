"""Planted-signal corpora for end-to-end checks with the mock backend.

Every sample gets integer 1-10 values for the 15 enhanced features. The
hallucination label follows a known linear rule over a few of them; rows whose
rule score falls inside a margin band below the cut are rejected so the rule
is recoverable from a small balanced training split.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AnnotatedSample, Dataset
from .features import FEATURE_REGISTRY, JUDGE_FEATURES

ENHANCED_FEATURES = JUDGE_FEATURES + FEATURE_REGISTRY
# enhanced-feature name -> schema field the mock must return to produce it
OUTPUT_FIELD = {name: name for name in ENHANCED_FEATURES}
OUTPUT_FIELD["factual_consistency_score"] = "accuracy_score"


@dataclass
class PlantedRule:
    features: tuple
    weights: tuple
    cut: float
    margin: float

    def score(self, values: dict) -> float:
        return float(sum(w * values[f] for f, w in zip(self.features, self.weights)))

    def label(self, values: dict) -> int:
        return int(self.score(values) >= self.cut)


@dataclass
class PlantedData:
    dataset: Dataset
    # sample id -> enhanced feature name -> value
    values: dict
    hal_rule: PlantedRule
    omis_rule: PlantedRule

    @property
    def planted(self) -> dict:
        """Per-sample overrides for :class:`~halomis.llm.MockBackend`, keyed by schema field."""
        return {sid: {OUTPUT_FIELD[k]: v for k, v in vals.items()} for sid, vals in self.values.items()}


def _rule(rng, features, weights, quantile, margin, pool):
    score = pool[:, [ENHANCED_FEATURES.index(f) for f in features]] @ np.asarray(weights, dtype=float)
    cut = float(np.quantile(score, quantile))
    # never allow an empty positive class
    cut = min(cut, float(score.max()))
    return PlantedRule(tuple(features), tuple(float(w) for w in weights), cut, float(margin)), score


def make_planted(n=2000, pos_rate=0.03, hal_features=None, hal_weights=None, omis_features=None,
                 omis_weights=None, margin=10.0, omis_pos_rate=0.05, seed=0) -> PlantedData:
    rng = np.random.default_rng(seed)
    hal_features = tuple(hal_features or ("hal_score", "contradiction_score", "entity_fabrication_score",
                                          "factual_consistency_score", "hedging_score"))
    omis_features = tuple(omis_features or ("omis_score", "relevance_score", "professional_score",
                                            "emotional_tone_score", "vague_score"))
    hal_weights = hal_weights or (1.0,) * len(hal_features)
    omis_weights = omis_weights or (1.0,) * len(omis_features)
    pool = rng.integers(1, 11, size=(40 * n, len(ENHANCED_FEATURES))).astype(float)
    hal_rule, hs = _rule(rng, hal_features, hal_weights, 1 - pos_rate, margin, pool)
    omis_rule, os_ = _rule(rng, omis_features, omis_weights, 1 - omis_pos_rate, 0.0, pool)
    outside = ~((hs < hal_rule.cut) & (hs > hal_rule.cut - margin))
    pos_rows = np.flatnonzero(outside & (hs >= hal_rule.cut))
    neg_rows = np.flatnonzero(outside & (hs < hal_rule.cut))
    n_pos = max(1, int(round(pos_rate * n)))
    if len(pos_rows) < n_pos or len(neg_rows) < n - n_pos:
        raise ValueError("pool too small for the requested rule; lower the margin")
    rows = np.concatenate([rng.choice(pos_rows, n_pos, replace=False),
                           rng.choice(neg_rows, n - n_pos, replace=False)])
    rows = rows[rng.permutation(n)]
    samples, values = [], {}
    for i, r in enumerate(rows):
        sid = f"syn-{i:05d}"
        vals = {f: int(v) for f, v in zip(ENHANCED_FEATURES, pool[r])}
        values[sid] = vals
        samples.append(AnnotatedSample(
            id=sid,
            prompt=f"Synthetic question {i} about coping with stress?",
            response=f"Synthetic answer {i}. It might help to rest and talk to someone you trust.",
            label_hallucination=hal_rule.label(vals),
            label_omission=int(os_[r] >= omis_rule.cut),
            source="synthetic",
        ))
    return PlantedData(Dataset(samples), values, hal_rule, omis_rule)
