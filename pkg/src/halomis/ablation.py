"""Feature-importance analyses: group ablation, isolation, leave-one-out, correlation."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .errors import ZeroVariance
from .evaluation.cv import run_cv
from .features import FEATURE_REGISTRY, JUDGE_FEATURES
from .ml import ClassifierSpec

GROUPS = {
    "full": JUDGE_FEATURES + FEATURE_REGISTRY,
    "custom_only": FEATURE_REGISTRY,
    "judge_only": JUDGE_FEATURES,
}


@dataclass
class AblationResult:
    target: str
    kind: str
    task: str
    metric: str
    metric_full: float
    metric_ablated: float
    delta: float
    f1: float = float("nan")
    roc_auc: float = float("nan")
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _cv(dataset, task, features, names, spec, k, seed):
    return run_cv(dataset, task, "features_ml", spec, k=k, seed=seed, features=features, feature_names=names)


def _result(target, kind, task, metric, full, report, config):
    ablated = report.mean[metric]
    return AblationResult(target, kind, task, metric, full, ablated, full - ablated,
                          report.mean["f1"], report.mean["roc_auc"], config)


def group_ablation(dataset, task, features, spec: Optional[ClassifierSpec] = None,
                   groups=("full", "custom_only", "judge_only"), metric="f1", k=5, seed=42,
                   group_features: Optional[dict] = None) -> list:
    """One CV run per feature group; ``delta`` is the drop relative to the full set."""
    spec = spec or ClassifierSpec("logistic", seed=seed)
    table = dict(GROUPS, **(group_features or {}))
    for g in groups:
        if not table.get(g):
            raise ValueError(f"feature group {g!r} is empty or unknown")
    config = {"spec": spec.to_dict(), "k": k, "seed": seed}
    full = _cv(dataset, task, features, table["full"], spec, k, seed)
    out = []
    for g in groups:
        rep = full if g == "full" else _cv(dataset, task, features, table[g], spec, k, seed)
        out.append(_result(g, "group", task, metric, full.mean[metric], rep, config))
    return out


def single_feature(dataset, task, features, spec: Optional[ClassifierSpec] = None,
                   feature_names=None, k=5, seed=42) -> list:
    """Each feature alone; ranked by F1 then ROC-AUC (best first)."""
    spec = spec or ClassifierSpec("logistic", seed=seed)
    names = tuple(feature_names or GROUPS["full"])
    config = {"spec": spec.to_dict(), "k": k, "seed": seed}
    full = _cv(dataset, task, features, names, spec, k, seed)
    out = [_result(n, "single", task, "f1", full.mean["f1"], _cv(dataset, task, features, (n,), spec, k, seed),
                   config) for n in names]
    out.sort(key=lambda r: (-_num(r.f1), -_num(r.roc_auc)))
    return out


def leave_one_out(dataset, task, features, spec: Optional[ClassifierSpec] = None,
                  feature_names=None, k=5, seed=42, metric="roc_auc") -> list:
    """Drop each feature in turn; ranked by the metric drop, largest first."""
    spec = spec or ClassifierSpec("logistic", seed=seed)
    names = tuple(feature_names or GROUPS["full"])
    if len(names) < 2:
        raise ValueError("leave-one-out needs at least 2 features")
    config = {"spec": spec.to_dict(), "k": k, "seed": seed}
    full = _cv(dataset, task, features, names, spec, k, seed)
    out = []
    for n in names:
        rest = tuple(x for x in names if x != n)
        out.append(_result(n, "leave_one_out", task, metric, full.mean[metric],
                           _cv(dataset, task, features, rest, spec, k, seed), config))
    out.sort(key=lambda r: -_num(r.delta))
    return out


def _num(x):
    return -math.inf if x is None or math.isnan(x) else x


def pearson_correlation(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and equally long")
    if len(x) < 3:
        raise ValueError("need at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise ZeroVariance("correlation undefined for a constant input")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def correlation_table(features: pd.DataFrame, names=None) -> pd.DataFrame:
    """Pairwise Pearson r over rows complete in both columns; NaN where undefined."""
    names = list(names or [c for c in GROUPS["full"] if c in features.columns])
    out = pd.DataFrame(np.nan, index=names, columns=names)
    for a in names:
        for b in names:
            sub = features[[a, b]].dropna() if a != b else features[[a]].dropna()
            try:
                out.loc[a, b] = pearson_correlation(sub[a], sub[b])
            except (ZeroVariance, ValueError):
                pass
    return out


def write_ablation_csv(results, path) -> None:
    """Ranked table: target, ablated metric, full metric, delta."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "kind", "task", "feature", "metric", "ablated", "full", "delta", "f1", "roc_auc"])
        for i, r in enumerate(results, start=1):
            w.writerow([i, r.kind, r.task, r.target, r.metric, repr(r.metric_ablated), repr(r.metric_full),
                        repr(r.delta), repr(r.f1), repr(r.roc_auc)])
