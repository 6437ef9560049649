"""L2-regularized logistic regression trained by full-batch gradient descent."""
from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import PROBA_EPS, check_training_data, check_predict_data


def loss_and_grad(theta, X, y, l2_strength):
    """Mean binary cross-entropy plus ``l2/2 * ||w||^2`` and its gradient.

    ``theta[0]`` is the (unpenalized) intercept, ``theta[1:]`` the weights.
    """
    b, w = theta[0], theta[1:]
    z = X @ w + b
    n = len(y)
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2_strength * (w @ w)
    r = expit(z) - y
    grad = np.empty_like(theta)
    grad[0] = r.sum() / n
    grad[1:] = X.T @ r / n + l2_strength * w
    return loss, grad


def lipschitz_bound(X, l2_strength) -> float:
    """Upper bound on the gradient's Lipschitz constant for the intercept-augmented design."""
    Xa = np.column_stack([np.ones(len(X)), X])
    sigma = np.linalg.norm(Xa, 2)
    return 0.25 * sigma**2 / len(X) + l2_strength


class LogisticRegressionGD(ClassifierMixin, BaseEstimator):
    """Logistic regression on standardized features.

    With ``learning_rate=None`` the step is ``1/L`` for the bound ``L`` from
    :func:`lipschitz_bound`, which makes the training loss non-increasing.
    Training stops when the gradient norm drops below ``tol`` or after
    ``max_epochs`` steps.
    """

    def __init__(self, l2_strength=1.0, max_epochs=2000, learning_rate=None, tol=1e-6):
        self.l2_strength = l2_strength
        self.max_epochs = max_epochs
        self.learning_rate = learning_rate
        self.tol = tol

    def fit(self, X, y):
        X, y = check_training_data(self, X, y)
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self.scale_ = scale
        Xs = (X - self.mean_) / self.scale_
        lr = self.learning_rate
        if lr is None:
            lr = 1.0 / lipschitz_bound(Xs, self.l2_strength)
        theta = np.zeros(X.shape[1] + 1)
        losses = []
        self.n_iter_ = 0
        for epoch in range(self.max_epochs):
            loss, grad = loss_and_grad(theta, Xs, y, self.l2_strength)
            losses.append(loss)
            if np.linalg.norm(grad) < self.tol:
                break
            theta = theta - lr * grad
            self.n_iter_ = epoch + 1
        else:
            losses.append(loss_and_grad(theta, Xs, y, self.l2_strength)[0])
        self.loss_curve_ = np.array(losses)
        self.step_size_ = lr
        self.intercept_ = float(theta[0])
        self.coef_ = theta[1:].copy()
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_predict_data(self, X)
        return ((X - self.mean_) / self.scale_) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = np.clip(expit(self.decision_function(X)), PROBA_EPS, 1.0 - PROBA_EPS)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def get_state(self) -> dict:
        return {
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_,
            "n_features_in": int(self.n_features_in_),
        }

    def set_state(self, state: dict):
        self.mean_ = np.array(state["mean"], dtype=float)
        self.scale_ = np.array(state["scale"], dtype=float)
        self.coef_ = np.array(state["coef"], dtype=float)
        self.intercept_ = float(state["intercept"])
        self.n_features_in_ = int(state["n_features_in"])
        self.classes_ = np.array([0, 1])
        return self
