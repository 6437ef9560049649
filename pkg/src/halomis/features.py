"""Five-dimension feature extraction and assembly of the enhanced feature vector.

Each analyzer runs one or two prompt chains against a backend and reduces the
parsed replies to 1-10 scores:

======  ==============================  =========================================
dim     prompts                         scores
======  ==============================  =========================================
LC      statement_extraction,           contradiction_score
        contradiction_analysis
EV      entity_extraction,              entity_fabrication_score,
        entity_verification             relationship_fabrication_score
FC      claim_extraction,               factual_consistency_score
        claim_verification (per claim)
LU      uncertainty                     hedging, certainty, epistemic, vague,
                                        overall_uncertainty scores
SA      sentiment_professional          relevance, emotional_tone,
                                        communication_style, professional scores
======  ==============================  =========================================

All scores keep the polarity of the prompt that produced them.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import AnalyzerFailed, HalomisError, IdMismatch
from .llm import ask_structured
from .prompts import get_template
from .scores import clamp_score

log = logging.getLogger(__name__)

DIMENSIONS = ("LC", "EV", "FC", "LU", "SA")
DIMENSION_FIELDS = {
    "LC": ("contradiction_score",),
    "EV": ("entity_fabrication_score", "relationship_fabrication_score"),
    "FC": ("factual_consistency_score",),
    "LU": ("hedging_score", "certainty_score", "epistemic_score", "vague_score", "overall_uncertainty_score"),
    "SA": ("relevance_score", "emotional_tone_score", "communication_style_score", "professional_score"),
}
FEATURE_REGISTRY = tuple(f for d in DIMENSIONS for f in DIMENSION_FIELDS[d])
JUDGE_FEATURES = ("hal_score", "omis_score")
FIELD_DIMENSION = {f: d for d, fs in DIMENSION_FIELDS.items() for f in fs}

MIN_STATEMENTS, MAX_STATEMENTS = 5, 15


@dataclass
class StatementSet:
    sample_id: str
    statements: list

    @classmethod
    def parse(cls, sample_id, record, flags) -> "StatementSet":
        raw = record.get("statements")
        if not isinstance(raw, list):
            raise HalomisError("'statements' is not a list")
        statements = []
        for item in raw:
            if isinstance(item, str):
                item = {"text": item}
            if not isinstance(item, dict):
                continue
            text = str(item.get("text") or item.get("statement") or "").strip()
            if not text:
                continue
            statements.append({
                "text": text,
                "entities": item.get("entities") or [],
                "quantitative_claims": item.get("quantitative_claims") or [],
                "causal": bool(item.get("causal", False)),
                "confidence": item.get("confidence"),
            })
        if len(statements) > MAX_STATEMENTS:
            flags.append(f"statements truncated from {len(statements)} to {MAX_STATEMENTS}")
            statements = statements[:MAX_STATEMENTS]
        elif len(statements) < MIN_STATEMENTS:
            flags.append(f"only {len(statements)} statements extracted")
        return cls(sample_id, statements)


@dataclass
class EntityGraph:
    entities: list
    relationships: list

    @classmethod
    def parse(cls, record, flags) -> "EntityGraph":
        entities = []
        for item in record.get("entities") or []:
            if isinstance(item, str):
                item = {"name": item}
            if isinstance(item, dict) and str(item.get("name") or "").strip():
                entities.append({
                    "name": str(item["name"]).strip(),
                    "type": item.get("type"),
                    "attributes": item.get("attributes") or [],
                    "source": item.get("source"),
                })
        names = {e["name"] for e in entities}
        relationships = []
        for item in record.get("relationships") or []:
            if not isinstance(item, dict):
                continue
            src = item.get("from", item.get("source_entity"))
            dst = item.get("to", item.get("target_entity"))
            if src in names and dst in names:
                relationships.append({
                    "from": src,
                    "to": dst,
                    "nature": item.get("nature"),
                    "qualifiers": item.get("qualifiers") or [],
                })
            else:
                flags.append(f"dropped relationship with unknown endpoint {src!r} -> {dst!r}")
        return cls(entities, relationships)

    def to_json(self) -> str:
        return json.dumps({"entities": self.entities, "relationships": self.relationships}, ensure_ascii=False)


@dataclass
class AnalyzerReport:
    """Outcome of one analyzer on one sample."""

    dimension: str
    scores: dict
    raw: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "AnalyzerReport":
        return cls(**rec)


def _score(record, name, flags):
    if name not in record:
        raise HalomisError(f"reply lacks {name!r}")
    value, clamped = clamp_score(record[name])
    if clamped:
        flags.append(f"{name} {record[name]!r} clamped to {value}")
    return value


def _stage(dimension, stage, template_id, fn):
    try:
        return fn()
    except AnalyzerFailed:
        raise
    except Exception as exc:
        raise AnalyzerFailed(dimension, f"stage {stage} ({template_id}): {exc}") from exc


def _ask(backend, template_id, bindings, sample_id):
    template = get_template(template_id)
    return ask_structured(backend, template.render(bindings), template.required_fields, sample_id=sample_id)


def analyze_logical_consistency(backend, sample) -> AnalyzerReport:
    flags, raw = [], []
    bindings = {"prompt": sample.prompt, "response": sample.response}

    def stage1():
        rec, text = _ask(backend, "statement_extraction", bindings, sample.id)
        raw.append(text)
        return StatementSet.parse(sample.id, rec, flags)

    statements = _stage("LC", 1, "statement_extraction", stage1)
    detail = {"statements": statements.statements, "pairs": []}
    if len(statements.statements) < 2:
        flags.append("fewer than 2 statements; nothing to contradict")
        return AnalyzerReport("LC", {"contradiction_score": 1}, raw, flags, detail)

    listing = "\n".join(f"{i + 1}. {s['text']}" for i, s in enumerate(statements.statements))

    def stage2():
        rec, text = _ask(backend, "contradiction_analysis", {"statements": listing}, sample.id)
        raw.append(text)
        pairs = [p for p in rec.get("pairs") or [] if isinstance(p, dict)]
        return pairs, _score(rec, "contradiction_score", flags)

    pairs, score = _stage("LC", 2, "contradiction_analysis", stage2)
    detail["pairs"] = pairs
    return AnalyzerReport("LC", {"contradiction_score": score}, raw, flags, detail)


def analyze_entities(backend, sample) -> AnalyzerReport:
    flags, raw = [], []

    def stage1():
        rec, text = _ask(backend, "entity_extraction", {"response": sample.response}, sample.id)
        raw.append(text)
        return EntityGraph.parse(rec, flags)

    graph = _stage("EV", 1, "entity_extraction", stage1)
    detail = {"entities": graph.entities, "relationships": graph.relationships}
    if not graph.entities:
        flags.append("no named entities")
        scores = {"entity_fabrication_score": 1, "relationship_fabrication_score": 1}
        return AnalyzerReport("EV", scores, raw, flags, detail)

    def stage2():
        rec, text = _ask(backend, "entity_verification", {"entity_json": graph.to_json()}, sample.id)
        raw.append(text)
        return {name: _score(rec, name, flags) for name in DIMENSION_FIELDS["EV"]}

    scores = _stage("EV", 2, "entity_verification", stage2)
    return AnalyzerReport("EV", scores, raw, flags, detail)


AGGREGATORS = {"min": min, "mean": lambda xs: sum(xs) / len(xs), "median": lambda xs: float(np.median(xs))}


def analyze_factual(backend, sample, aggregator: str = "min") -> AnalyzerReport:
    """Per-claim accuracy, reduced by ``aggregator`` (default: the least accurate claim)."""
    flags, raw = [], []
    bindings = {"prompt": sample.prompt, "response": sample.response}

    def stage1():
        rec, text = _ask(backend, "claim_extraction", bindings, sample.id)
        raw.append(text)
        claims = []
        for item in rec.get("claims") or []:
            if isinstance(item, str):
                item = {"claim": item}
            if isinstance(item, dict) and str(item.get("claim") or "").strip():
                facts = item.get("facts_to_verify") or []
                if not isinstance(facts, list):
                    facts = [facts]
                claims.append({"claim": str(item["claim"]).strip(), "facts_to_verify": facts,
                               "type": item.get("type")})
        return claims

    claims = _stage("FC", 1, "claim_extraction", stage1)
    if not claims:
        flags.append("no verifiable claims")
        return AnalyzerReport("FC", {"factual_consistency_score": 10}, raw, flags, {"claims": []})

    accuracies = []
    for i, claim in enumerate(claims):
        facts = json.dumps(claim["facts_to_verify"], ensure_ascii=False)

        def verify():
            rec, text = _ask(backend, "claim_verification",
                             {"claim": claim["claim"], "facts_to_verify": facts}, sample.id)
            raw.append(text)
            return _score(rec, "accuracy_score", flags)

        acc = _stage("FC", f"2.{i + 1}", "claim_verification", verify)
        claim["accuracy_score"] = acc
        accuracies.append(acc)
    score = AGGREGATORS[aggregator](accuracies)
    return AnalyzerReport("FC", {"factual_consistency_score": score}, raw, flags, {"claims": claims})


def _single_chain(dimension, template_id, bindings_fn):
    def analyzer(backend, sample) -> AnalyzerReport:
        flags, raw = [], []

        def run():
            rec, text = _ask(backend, template_id, bindings_fn(sample), sample.id)
            raw.append(text)
            return {name: _score(rec, name, flags) for name in DIMENSION_FIELDS[dimension]}

        scores = _stage(dimension, 1, template_id, run)
        return AnalyzerReport(dimension, scores, raw, flags)

    analyzer.__name__ = f"analyze_{template_id}"
    return analyzer


analyze_uncertainty = _single_chain("LU", "uncertainty", lambda s: {"response": s.response})
analyze_sentiment = _single_chain(
    "SA", "sentiment_professional", lambda s: {"prompt": s.prompt, "response": s.response}
)

ANALYZERS = {
    "LC": analyze_logical_consistency,
    "EV": analyze_entities,
    "FC": analyze_factual,
    "LU": analyze_uncertainty,
    "SA": analyze_sentiment,
}


@dataclass
class DimensionalFeatures:
    sample_id: str
    values: dict
    # dimension -> error message for analyzers that failed
    failures: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures

    def raise_for_failures(self):
        for dim in DIMENSIONS:
            if dim in self.failures:
                raise AnalyzerFailed(dim, self.failures[dim])

    def get(self, name):
        return self.values.get(name)


def run_analyzer(backend, sample, dimension, cache=None) -> AnalyzerReport:
    if cache is not None:
        hit = cache.get(backend.backend_id, sample.id, dimension)
        if hit is not None:
            return AnalyzerReport.from_record(hit)
    report = ANALYZERS[dimension](backend, sample)
    if cache is not None:
        cache.put(backend.backend_id, sample.id, dimension, report.to_record())
    return report


def extract_all(backend, sample, cache=None, max_workers: int = 1, dimensions=DIMENSIONS) -> DimensionalFeatures:
    """Run every analyzer; failures are recorded per dimension instead of raised."""

    def one(dim):
        try:
            return dim, run_analyzer(backend, sample, dim, cache), None
        except AnalyzerFailed as exc:
            return dim, None, str(exc.cause or exc)
        except HalomisError as exc:
            return dim, None, str(exc)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, dimensions))
    else:
        results = [one(d) for d in dimensions]
    values, failures, reports = {}, {}, {}
    for dim, report, error in results:
        if report is None:
            log.warning("sample %s: analyzer %s failed: %s", sample.id, dim, error)
            failures[dim] = error
            for name in DIMENSION_FIELDS[dim]:
                values[name] = None
        else:
            reports[dim] = report
            values.update(report.scores)
    ordered = {name: values.get(name) for name in FEATURE_REGISTRY if FIELD_DIMENSION[name] in dimensions}
    return DimensionalFeatures(sample.id, ordered, failures, reports)


@dataclass
class EnhancedFeatureVector:
    sample_id: str
    values: np.ndarray
    feature_names: tuple

    def __getitem__(self, name):
        return self.values[self.feature_names.index(name)]

    def as_dict(self) -> dict:
        return dict(zip(self.feature_names, self.values.tolist()))


def assemble_vector(judge_scores, features: DimensionalFeatures, registry=FEATURE_REGISTRY) -> EnhancedFeatureVector:
    """``[hal_score, omis_score] + registry-ordered features``; failed fields become NaN."""
    if judge_scores.sample_id != features.sample_id:
        raise IdMismatch(f"judge scores for {judge_scores.sample_id!r} vs features for {features.sample_id!r}")
    values = [float(judge_scores.hal_score), float(judge_scores.omis_score)]
    for name in registry:
        v = features.values.get(name)
        values.append(math.nan if v is None else float(v))
    return EnhancedFeatureVector(features.sample_id, np.array(values), JUDGE_FEATURES + tuple(registry))


def export_vectors_csv(vectors, path) -> None:
    vectors = list(vectors)
    if not vectors:
        raise ValueError("no vectors to export")
    names = vectors[0].feature_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("sample_id",) + tuple(names))
        for v in vectors:
            if v.feature_names != names:
                raise IdMismatch(f"vector {v.sample_id!r} has a different feature layout")
            writer.writerow([v.sample_id] + [repr(float(x)) for x in v.values])
