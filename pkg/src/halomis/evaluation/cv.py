"""Stratified, balanced cross-validation for every detection pipeline."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..dataset import balance_training_split, stratified_folds
from ..ensemble import BINARY_LOGIT_FEATURES, MULTI_AGG_FEATURES, rule_combine
from ..errors import MissingFeatures
from ..features import FEATURE_REGISTRY, JUDGE_FEATURES
from ..judge import JudgeThresholdClassifier
from ..metrics import METRIC_NAMES, evaluate_predictions
from ..ml import ClassifierSpec, INNER_K, fit, grid_search, predict_proba
from ..textstats import TEXTSTAT_FEATURES

log = logging.getLogger(__name__)

PIPELINES = (
    "judge_only",
    "features_ml",
    "judge_only_scores_ml",
    "custom_features_only_ml",
    "textstats_ml",
    "ensemble_variants",
    "binary_logit_ml",
    "multi_llm_individual_ml",
    "rule_or",
    "rule_and",
)
ML_PIPELINE_FEATURES = {
    "features_ml": JUDGE_FEATURES + FEATURE_REGISTRY,
    "judge_only_scores_ml": JUDGE_FEATURES,
    "custom_features_only_ml": FEATURE_REGISTRY,
    "textstats_ml": TEXTSTAT_FEATURES,
    "ensemble_variants": MULTI_AGG_FEATURES,
    "binary_logit_ml": BINARY_LOGIT_FEATURES,
    "rule_or": JUDGE_FEATURES + FEATURE_REGISTRY,
    "rule_and": JUDGE_FEATURES + FEATURE_REGISTRY,
}
JUDGE_COLUMN = {"hal": "hal_score", "omis": "omis_score"}
INDIVIDUAL_PREFIX = "indiv__"
ML_CUTOFF = 0.5
STD_CONVENTION = "population std across folds (denominator k)"


def pipeline_features(pipeline: str, task: str, columns=()) -> tuple:
    if pipeline == "judge_only":
        return (JUDGE_COLUMN[task],)
    if pipeline == "multi_llm_individual_ml":
        return tuple(c for c in columns if c.startswith(INDIVIDUAL_PREFIX))
    try:
        return tuple(ML_PIPELINE_FEATURES[pipeline])
    except KeyError:
        raise ValueError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}") from None


@dataclass
class FoldResult:
    fold_index: int
    n_train: int
    n_train_balanced: int
    n_test: int
    n_test_pos: int
    metrics: dict
    threshold: Optional[int] = None
    params: Optional[dict] = None
    inner_f1: Optional[float] = None


@dataclass
class CVReport:
    task: str
    pipeline: str
    family: Optional[str]
    k: int
    seed: int
    feature_names: list
    folds: list
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    std_convention: str = STD_CONVENTION

    def aggregate(self):
        for m in METRIC_NAMES:
            vals = [f.metrics[m] for f in self.folds]
            self.mean[m] = float(sum(vals) / len(vals))
            self.std[m] = float(np.sqrt(sum((v - self.mean[m]) ** 2 for v in vals) / len(vals)))
        return self

    @property
    def label(self) -> str:
        return f"{self.pipeline}/{self.family or '-'}/{self.task}"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True)

    def csv_row(self) -> dict:
        row = {"pipeline": self.pipeline, "family": self.family or "", "task": self.task,
               "k": self.k, "seed": self.seed, "n_features": len(self.feature_names)}
        for m in METRIC_NAMES:
            row[f"{m}_mean"] = repr(self.mean[m])
            row[f"{m}_std"] = repr(self.std[m])
        return row


CSV_FIELDS = ["pipeline", "family", "task", "k", "seed", "n_features"] + [
    f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "std")
]


def write_results_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in reports:
            writer.writerow(r.csv_row())


def _check_features(features, ids, columns):
    if features is None:
        raise MissingFeatures(ids)
    missing_cols = [c for c in columns if c not in features.columns]
    if missing_cols:
        raise MissingFeatures(ids, hint=f"columns {missing_cols} absent; run `halomis extract`")
    present = features.index.intersection(ids)
    missing = [i for i in ids if i not in present]
    sub = features.loc[present, list(columns)]
    missing += [i for i in sub.index[sub.isna().all(axis=1)]]
    if missing:
        raise MissingFeatures(sorted(set(missing), key=ids.index))


def run_cv(dataset, task, pipeline, spec: Optional[ClassifierSpec] = None, k: int = 5, seed: int = 42,
           features=None, folds=None, feature_names=None, inner_k: int = INNER_K) -> CVReport:
    """Stratified k-fold evaluation of one pipeline on one task.

    Per fold: the training split is undersampled to 1:1, the decision rule
    (judge threshold and/or classifier hyperparameters) is chosen on it alone,
    and metrics are computed on the untouched test fold. ``features`` is a
    DataFrame indexed by sample id; ``feature_names`` overrides the pipeline's
    column set (used by ablations). ``folds`` may be passed to pin the split.
    """
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}")
    uses_ml = pipeline != "judge_only"
    if uses_ml and spec is None:
        spec = ClassifierSpec("logistic", seed=seed)
    names = tuple(feature_names) if feature_names is not None else pipeline_features(
        pipeline, task, features.columns if features is not None else ())
    if not names:
        raise ValueError(f"pipeline {pipeline!r} has no feature columns")
    judge_col = JUDGE_COLUMN[task]
    needed = names + ((judge_col,) if pipeline in ("rule_or", "rule_and") and judge_col not in names else ())
    if folds is None:
        folds = stratified_folds(dataset, k, task, seed)
    all_ids = [i for f in folds for i in f.test_ids]
    _check_features(features, all_ids, needed)

    results = []
    for fold in folds:
        train_ids = balance_training_split(dataset, fold.train_ids, task, seed)
        tr = features.loc[train_ids, list(needed)]
        complete = tr.notna().all(axis=1).to_numpy()
        tr = tr[complete]
        y_tr = dataset.labels(tr.index, task)
        te = features.loc[fold.test_ids, list(needed)]
        y_te = dataset.labels(fold.test_ids, task)
        threshold = params = inner = None

        if pipeline == "judge_only":
            clf = JudgeThresholdClassifier(task).fit(tr[[judge_col]].to_numpy(), y_tr)
            threshold = clf.threshold_
            scores = te[judge_col].to_numpy(dtype=float)
            pred = clf.predict(te[[judge_col]].to_numpy())
        else:
            X_tr = tr[list(names)]
            search = grid_search(spec, X_tr.to_numpy(), y_tr, inner_k, seed)
            params, inner = search.best_params, search.best_score
            model = fit(spec, X_tr.to_numpy(), y_tr, params, names)
            scores = predict_proba(model, te[list(names)].to_numpy(), names)
            pred = (scores >= ML_CUTOFF).astype(int)
            if pipeline in ("rule_or", "rule_and"):
                judge = JudgeThresholdClassifier(task).fit(tr[[judge_col]].to_numpy(), y_tr)
                threshold = judge.threshold_
                judge_pred = judge.predict(te[[judge_col]].fillna(0).to_numpy())
                mode = "OR" if pipeline == "rule_or" else "AND"
                pred = np.array([rule_combine(a, b, mode) for a, b in zip(judge_pred, pred)])
        report = evaluate_predictions(y_te, pred, scores)
        metrics = {m: getattr(report, m) for m in METRIC_NAMES}
        results.append(FoldResult(fold.fold_index, len(fold.train_ids), int(len(y_tr)), len(y_te),
                                  int(y_te.sum()), metrics, threshold, params, inner))
        log.debug("%s %s fold %d: %s", pipeline, task, fold.fold_index, metrics)

    config = {"inner_k": inner_k, "ml_cutoff": ML_CUTOFF,
              "spec": spec.to_dict() if uses_ml else None}
    return CVReport(task, pipeline, spec.family if uses_ml else None, len(folds), seed,
                    list(names), results, config=config).aggregate()


def _key(x):
    return -math.inf if x is None or (isinstance(x, float) and math.isnan(x)) else x


def select_best(reports) -> dict:
    """Winning report per task: highest mean F1, then mean ROC-AUC, then input order."""
    best = {}
    for r in reports:
        cur = best.get(r.task)
        if cur is None:
            best[r.task] = r
            continue
        if (_key(r.mean["f1"]), _key(r.mean["roc_auc"])) > (_key(cur.mean["f1"]), _key(cur.mean["roc_auc"])):
            best[r.task] = r
    return best
