"""LLM-as-a-judge baseline: 1-10 severity scores and a fold-local threshold."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, column_or_1d

from .errors import DegenerateLabels
from .metrics import f1_score
from .llm import ask_structured
from .prompts import assemble_few_shot, get_template
from .scores import clamp_score

log = logging.getLogger(__name__)

THRESHOLD_GRID = tuple(range(2, 10))


@dataclass
class JudgeScores:
    sample_id: str
    hal_score: int
    omis_score: int
    confidence: Optional[str] = None
    categories: Optional[list] = None
    raw_text: str = ""
    warnings: list = field(default_factory=list)

    def score(self, task: str) -> int:
        return self.hal_score if task == "hal" else self.omis_score

    def to_record(self) -> dict:
        return {
            "hal_score": self.hal_score,
            "omis_score": self.omis_score,
            "confidence": self.confidence,
            "categories": self.categories,
            "raw_text": self.raw_text,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_record(cls, sample_id: str, rec: dict) -> "JudgeScores":
        return cls(sample_id, rec["hal_score"], rec["omis_score"], rec.get("confidence"),
                   rec.get("categories"), rec.get("raw_text", ""), list(rec.get("warnings", [])))


@dataclass(frozen=True)
class ThresholdChoice:
    task: str
    threshold: int
    train_f1: float


def parse_judge_record(sample_id: str, record: dict, raw_text: str = "") -> JudgeScores:
    warnings = []
    scores = {}
    for name in ("hal_score", "omis_score"):
        value, clamped = clamp_score(record[name])
        if clamped:
            warnings.append(f"{name} {record[name]!r} clamped to {value}")
            log.warning("sample %s: %s out of range (%r), clamped", sample_id, name, record[name])
        scores[name] = value
    categories = record.get("categories")
    if categories is not None and not isinstance(categories, list):
        categories = [str(categories)]
    confidence = record.get("confidence")
    return JudgeScores(
        sample_id,
        scores["hal_score"],
        scores["omis_score"],
        None if confidence is None else str(confidence),
        categories,
        raw_text,
        warnings,
    )


def judge_pair(backend, sample, exemplars=(), k: int = 0) -> JudgeScores:
    """Score one pair; ``k > 0`` prefixes labeled ``exemplars`` (see ``assemble_few_shot``)."""
    template = get_template("judge")
    bindings = {"prompt": sample.prompt, "response": sample.response}
    if k:
        pool = [(e, {"hal": e.label_hallucination, "omis": e.label_omission}) for e in exemplars if e.id != sample.id]
        text = assemble_few_shot("judge", bindings, pool, k)
    else:
        text = template.render(bindings)
    record, raw = ask_structured(backend, text, template.required_fields, sample_id=sample.id)
    return parse_judge_record(sample.id, record, raw)


def binarize(score, threshold):
    """1 where ``score >= threshold``; works elementwise on arrays."""
    if np.ndim(score) == 0:
        return int(score >= threshold)
    return (np.asarray(score) >= threshold).astype(int)


def select_threshold(scores, labels, task: str = "hal", grid=THRESHOLD_GRID) -> ThresholdChoice:
    """Grid value maximizing training F1; ties go to the smaller threshold."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if labels.sum() == 0 or labels.sum() == len(labels):
        raise DegenerateLabels("threshold selection needs both classes")
    best_t, best_f1 = None, -1.0
    for t in grid:
        f1 = f1_score(labels, binarize(scores, t))
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    return ThresholdChoice(task, int(best_t), best_f1)


class JudgeThresholdClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper: learns the score threshold, predicts ``score >= threshold``.

    ``X`` must have exactly one column holding the judge's 1-10 score.
    """

    def __init__(self, task="hal"):
        self.task = task

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if X.shape[1] != 1:
            raise ValueError("JudgeThresholdClassifier expects a single score column")
        self.classes_ = np.array([0, 1])
        self.choice_ = select_threshold(X[:, 0], y, self.task)
        self.threshold_ = self.choice_.threshold
        return self

    def decision_function(self, X):
        check_is_fitted(self, "threshold_")
        return column_or_1d(np.asarray(X, dtype=float)[:, :1])

    def predict(self, X):
        return binarize(self.decision_function(X), self.threshold_)
