"""Input checks shared by the in-repo estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from ..errors import DegenerateLabels, NonFiniteFeature

# predicted probabilities stay this far from 0 and 1
PROBA_EPS = 1e-12


def check_training_data(estimator, X, y):
    X = check_array(X, dtype=float, ensure_all_finite=False)
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("training features contain NaN or infinite values")
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != len(X):
        raise ValueError(f"y must be 1-D with {len(X)} entries")
    if len(y) < 4:
        raise ValueError("need at least 4 training samples")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    y = y.astype(float)
    if y.min() == y.max():
        raise DegenerateLabels("training labels contain a single class")
    estimator.n_features_in_ = X.shape[1]
    estimator.classes_ = np.array([0, 1])
    return X, y


def check_predict_data(estimator, X):
    X = check_array(X, dtype=float, ensure_all_finite=False)
    if X.shape[1] != estimator.n_features_in_:
        raise ValueError(f"expected {estimator.n_features_in_} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("features contain NaN or infinite values")
    return X
