"""Classifier families, nested grid search and model persistence."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import clone

from ..dataset import stratified_fold_indices
from ..errors import FeatureNameMismatch, HalomisError
from ..metrics import f1_score
from .logistic import LogisticRegressionGD
from .trees import GradientBoosting, RandomForest

log = logging.getLogger(__name__)

FAMILIES = ("logistic", "random_forest", "gbdt")
ESTIMATORS = {
    "logistic": LogisticRegressionGD,
    "random_forest": RandomForest,
    "gbdt": GradientBoosting,
}
HYPERPARAMETERS = {
    "logistic": ("l2_strength", "max_epochs", "learning_rate"),
    "random_forest": ("n_trees", "max_depth", "min_leaf"),
    "gbdt": ("n_rounds", "learning_rate", "max_depth"),
}
DEFAULT_GRIDS = {
    "logistic": {"l2_strength": [0.01, 0.1, 1.0, 10.0]},
    "random_forest": {"n_trees": [100, 300], "max_depth": [4, 8, None]},
    "gbdt": {"n_rounds": [100, 300], "learning_rate": [0.05, 0.1], "max_depth": [3, 5]},
}
INNER_K = 3
MODEL_FORMAT = "halomis-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    hyper_grid: dict = None
    seed: int = 42

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        grid = DEFAULT_GRIDS[self.family] if self.hyper_grid is None else self.hyper_grid
        if not grid or any(len(v) == 0 for v in grid.values()):
            raise ValueError("hyper_grid must be non-empty")
        bad = set(grid) - set(HYPERPARAMETERS[self.family])
        if bad:
            raise ValueError(f"invalid hyperparameters for {self.family}: {sorted(bad)}")
        object.__setattr__(self, "hyper_grid", {k: list(v) for k, v in grid.items()})

    def __hash__(self):
        return hash((self.family, json.dumps(self.hyper_grid, sort_keys=True), self.seed))

    def points(self) -> list:
        names = list(self.hyper_grid)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.hyper_grid.values())]

    def make_estimator(self, params: Optional[dict] = None):
        est = ESTIMATORS[self.family]()
        if self.family != "logistic":
            est.set_params(random_state=self.seed)
        if params:
            est.set_params(**params)
        return est

    def to_dict(self) -> dict:
        return {"family": self.family, "hyper_grid": self.hyper_grid, "seed": self.seed}


@dataclass
class TrainedModel:
    family: str
    params: dict
    estimator: object
    feature_names: tuple
    imputation_table: dict
    train_config: dict = field(default_factory=dict)

    @property
    def standardization(self) -> Optional[dict]:
        if self.family != "logistic":
            return None
        return {"mean": self.estimator.mean_.tolist(), "std": self.estimator.scale_.tolist()}


def _as_matrix(X, feature_names=None):
    """Return ``(array, names)`` from a DataFrame or an array plus names."""
    if hasattr(X, "columns"):
        names = tuple(str(c) for c in X.columns)
        return np.asarray(X, dtype=float), names
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if feature_names is None:
        feature_names = tuple(f"x{i}" for i in range(X.shape[1]))
    if len(feature_names) != X.shape[1]:
        raise FeatureNameMismatch(f"{len(feature_names)} names for {X.shape[1]} columns")
    return X, tuple(feature_names)


def fit(spec: ClassifierSpec, X, y, params: Optional[dict] = None, feature_names=None) -> TrainedModel:
    """Train one model; ``params`` defaults to the first grid point."""
    X, names = _as_matrix(X, feature_names)
    params = dict(spec.points()[0] if params is None else params)
    est = spec.make_estimator(params).fit(X, np.asarray(y))
    medians = np.median(X, axis=0)
    return TrainedModel(
        family=spec.family,
        params=params,
        estimator=est,
        feature_names=names,
        imputation_table=dict(zip(names, medians.tolist())),
        train_config={"seed": spec.seed, "n_train": int(len(X)), "n_pos": int(np.sum(y))},
    )


def predict_proba(model: TrainedModel, X, feature_names=None) -> np.ndarray:
    """Positive-class probability; NaN entries take the training median."""
    X, names = _as_matrix(X, feature_names if feature_names is not None else
                          (None if hasattr(X, "columns") else model.feature_names))
    if names != tuple(model.feature_names):
        raise FeatureNameMismatch(f"model expects {list(model.feature_names)}, got {list(names)}")
    X = X.copy()
    nan = np.isnan(X)
    if nan.any():
        fill = np.array([model.imputation_table[n] for n in names])
        X[nan] = np.broadcast_to(fill, X.shape)[nan]
    return model.estimator.predict_proba(X)[:, 1]


@dataclass
class GridResult:
    best_params: dict
    best_score: float
    # (params, mean inner F1) for every grid point in declaration order
    scores: list


def grid_search(spec: ClassifierSpec, X, y, inner_k: int = INNER_K, seed: Optional[int] = None) -> GridResult:
    """Pick the grid point with the best mean inner-fold F1 (cutoff 0.5).

    A grid point whose fit fails scores 0. Ties keep the earlier point.
    """
    if inner_k < 2:
        raise ValueError("inner_k must be >= 2")
    X, _ = _as_matrix(X)
    y = np.asarray(y).astype(int)
    seed = spec.seed if seed is None else seed
    folds = stratified_fold_indices(y, inner_k, seed)
    results, best = [], None
    for params in spec.points():
        f1s = []
        for f in range(inner_k):
            train, test = folds != f, folds == f
            try:
                est = spec.make_estimator(params).fit(X[train], y[train])
                pred = (est.predict_proba(X[test])[:, 1] >= 0.5).astype(int)
                f1s.append(f1_score(y[test], pred))
            except (HalomisError, ValueError) as exc:
                log.debug("grid point %s failed on inner fold %d: %s", params, f, exc)
                f1s = None
                break
        score = 0.0 if f1s is None else float(np.mean(f1s))
        results.append((params, score))
        if best is None or score > best[1]:
            best = (params, score)
    return GridResult(dict(best[0]), best[1], results)


def save_model(model: TrainedModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": model.family,
        "params": model.params,
        "feature_names": list(model.feature_names),
        "imputation_table": model.imputation_table,
        "standardization": model.standardization,
        "train_config": model.train_config,
        "state": model.estimator.get_state(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    est = ESTIMATORS[doc["family"]](**doc["params"]).set_state(doc["state"])
    return TrainedModel(doc["family"], doc["params"], est, tuple(doc["feature_names"]),
                        doc["imputation_table"], doc["train_config"])


__all__ = [
    "ClassifierSpec",
    "DEFAULT_GRIDS",
    "FAMILIES",
    "GradientBoosting",
    "GridResult",
    "LogisticRegressionGD",
    "RandomForest",
    "TrainedModel",
    "fit",
    "grid_search",
    "load_model",
    "predict_proba",
    "save_model",
]
