"""Fixed deployed predictors g, loss functions and the tolerance rule for tau."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_matrix, check_open_unit, check_vector, order_statistic

LOSSES = ("absolute", "squared")


class KNNRegressor(RegressorMixin, BaseEstimator):
    """Uniform-weight k-nearest-neighbour regression with exact Euclidean search."""

    def __init__(self, n_neighbors=10):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_vector(y, "y")
        if not 1 <= self.n_neighbors <= len(X):
            raise ValidationError(
                f"n_neighbors={self.n_neighbors} must lie in [1, n_train={len(X)}]")
        self.X_train_, self.y_train_ = X, y
        self.tree_ = cKDTree(X)
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        _, idx = self.tree_.query(check_matrix(X), k=self.n_neighbors)
        idx = idx.reshape(len(idx), -1)
        return self.y_train_[idx].mean(axis=1)

    def to_dict(self):
        return {"kind": "knn_regressor", "n_neighbors": self.n_neighbors,
                "X_train": self.X_train_.tolist(), "y_train": self.y_train_.tolist()}


class LinearOLS(RegressorMixin, BaseEstimator):
    """Ordinary least squares with intercept; refuses rank-deficient designs."""

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_vector(y, "y")
        design = np.column_stack([X, np.ones(len(X))])
        beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < design.shape[1]:
            raise ValidationError(
                f"singular OLS design: rank {rank} < {design.shape[1]} columns")
        self.coef_, self.intercept_ = beta[:-1], float(beta[-1])
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_matrix(X) @ self.coef_ + self.intercept_

    def to_dict(self):
        return {"kind": "linear_ols", "coef": self.coef_.tolist(), "intercept": self.intercept_}


def fit_predictor(train, kind="linear_ols", **hyperparameters):
    if kind == "linear_ols":
        model = LinearOLS()
    elif kind == "knn_regressor":
        model = KNNRegressor(**hyperparameters)
    else:
        raise ValidationError(f"unknown predictor kind {kind!r}")
    return model.fit(train.features, train.target)


def predictor_from_dict(d):
    if d["kind"] == "linear_ols":
        model = LinearOLS()
        model.coef_ = np.asarray(d["coef"], dtype=float)
        model.intercept_ = float(d["intercept"])
        return model
    if d["kind"] == "knn_regressor":
        return KNNRegressor(d["n_neighbors"]).fit(d["X_train"], d["y_train"])
    raise ValidationError(f"unknown predictor kind {d['kind']!r}")


def loss_values(pred, y, loss="absolute"):
    residual = np.asarray(pred, dtype=float) - np.asarray(y, dtype=float)
    if loss == "absolute":
        return np.abs(residual)
    if loss == "squared":
        return residual ** 2
    raise ValidationError(f"unknown loss {loss!r}")


def realized_losses(predictor, loss, data):
    return loss_values(predictor.predict(data.features), data.target, loss)


def tau_from_quantile(losses, level=0.7):
    """Higher order statistic at rank ceil(level * m): at most (1 - level) of losses exceed it."""
    losses = check_vector(losses, "losses")
    return order_statistic(losses, check_open_unit(level, "level"))
