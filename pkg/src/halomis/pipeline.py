"""Dataset-level extraction and feature-table assembly over the cache."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import pandas as pd

from .ensemble import (BINARY_LOGIT_FEATURES, MultiJudgeScores, aggregate_multi, binary_logit_features,
                       multi_llm_scores)
from .errors import HalomisError, TooFewBackends
from .features import DIMENSIONS, FEATURE_REGISTRY, JUDGE_FEATURES, AnalyzerReport, extract_all
from .judge import JudgeScores, judge_pair
from .textstats import TEXTSTAT_FEATURES, compute_text_stats

log = logging.getLogger(__name__)

JUDGE_SECTION = "judge"


@dataclass
class ExtractSummary:
    n_samples: int
    n_calls: int
    # sample id -> list of error messages
    failed: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failed


def judge_section(k: int = 0) -> str:
    return JUDGE_SECTION if not k else f"{JUDGE_SECTION}_k{k}"


def _judge(backend, sample, cache, exemplars=(), k=0):
    section = judge_section(k)
    hit = cache.get(backend.backend_id, sample.id, section) if cache is not None else None
    if hit is not None:
        return JudgeScores.from_record(sample.id, hit)
    scores = judge_pair(backend, sample, exemplars, k)
    if cache is not None:
        cache.put(backend.backend_id, sample.id, section, scores.to_record())
    return scores


def extract_sample(backend, sample, cache=None, multi_backends=(), binary_logit=False, exemplars=(),
                   few_shot_k: int = 0) -> list:
    """Populate every cache section for one sample; returns error messages."""
    errors = []
    try:
        _judge(backend, sample, cache, exemplars, few_shot_k)
    except HalomisError as exc:
        errors.append(f"judge: {exc}")
    dims = extract_all(backend, sample, cache)
    errors += [f"{d}: {msg}" for d, msg in dims.failures.items()]
    if binary_logit:
        try:
            binary_logit_features(backend, sample, cache)
        except HalomisError as exc:
            errors.append(f"binary_logit: {exc}")
    if multi_backends:
        try:
            scores = multi_llm_scores(list(multi_backends), sample, cache)
            errors += [f"multi_llm_judge {w}" for w in scores.warnings]
        except HalomisError as exc:
            errors.append(f"multi_llm_judge: {exc}")
    return errors


def extract_dataset(dataset, backend, cache=None, workers: int = 1, multi_backends=(), binary_logit=False,
                    exemplars=(), few_shot_k: int = 0, progress=None) -> ExtractSummary:
    """Run extraction over all samples, skipping sections already cached.

    With ``workers > 1`` samples are processed concurrently; the cache is
    compacted at the end so its bytes do not depend on completion order.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    backends = [backend] + [b for b in multi_backends if b is not backend]
    calls_before = sum(b.calls for b in backends)
    samples = list(dataset)

    def one(sample):
        return sample.id, extract_sample(backend, sample, cache, multi_backends, binary_logit, exemplars, few_shot_k)

    failed = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, samples))
    else:
        results = map(one, samples)
    for done, (sid, errors) in enumerate(results, start=1):
        if errors:
            failed[sid] = errors
        if progress is not None:
            progress(done, len(samples))
    if cache is not None:
        cache.compact()
    return ExtractSummary(len(samples), sum(b.calls for b in backends) - calls_before, failed)


def build_feature_table(dataset, cache, backend_id: str, multi_backend_ids=(), binary_logit=False,
                        few_shot_k: int = 0) -> pd.DataFrame:
    """One row per sample from cached sections; missing values are NaN."""
    rows = []
    for sample in dataset:
        row = {}
        sec = cache.sections(backend_id, sample.id)
        judge = sec.get(judge_section(few_shot_k))
        for name in JUDGE_FEATURES:
            row[name] = float(judge[name]) if judge else math.nan
        for dim in DIMENSIONS:
            if dim in sec:
                row.update({k: float(v) for k, v in AnalyzerReport.from_record(sec[dim]).scores.items()})
        for name in FEATURE_REGISTRY:
            row.setdefault(name, math.nan)
        row.update(compute_text_stats(sample.prompt, sample.response))
        if binary_logit:
            # the two length columns already come from the text statistics
            logit = sec.get("binary_logit")
            row["logit_probability"] = float(logit["probability"]) if logit else math.nan
        if multi_backend_ids:
            got = {b: cache.get(b, sample.id, "multi_llm_judge") for b in multi_backend_ids}
            got = {b: v for b, v in got.items() if v is not None}
            try:
                row.update(aggregate_multi(MultiJudgeScores(sample.id, got)).as_dict())
            except TooFewBackends:
                log.debug("sample %s: fewer than 2 multi-LLM scores cached", sample.id)
        rows.append(row)
    columns = list(JUDGE_FEATURES + FEATURE_REGISTRY + TEXTSTAT_FEATURES)
    if binary_logit:
        columns += [c for c in BINARY_LOGIT_FEATURES if c not in columns]
    table = pd.DataFrame(rows, index=pd.Index(dataset.ids, name="sample_id"))
    extra = sorted(c for c in table.columns if c not in columns)
    return table.reindex(columns=columns + extra)
