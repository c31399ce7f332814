"""Per-run metrics and the two baseline scores (isolation forest, label variance)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.ensemble import IsolationForest
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_matrix, check_open_unit, check_vector, order_statistic


@dataclass(frozen=True)
class RunMetrics:
    """Empirical rates on one test sample; ``p_bigZ_given_A`` is None when nothing is accepted."""

    p_A: float
    p_bigZ: float
    p_bigZ_given_A: float | None
    p_conf: float | None

    def to_dict(self):
        return asdict(self)


def compute_metrics(losses, scores, tau, lam, bounds=None):
    """Acceptance, tail and coverage rates.

    ``scores`` are thresholded at ``lam`` (None rejects everything). Coverage is
    measured against ``bounds`` when given (baselines score on another scale), else
    against ``scores``.
    """
    Z = check_vector(losses, "losses")
    U = np.asarray(scores, dtype=float).ravel()
    if U.size != Z.size:
        raise ValidationError(f"length mismatch: {Z.size} losses, {U.size} scores")
    accepted = np.zeros(Z.size, bool) if lam is None else U <= lam
    big = Z > tau
    n_acc = int(accepted.sum())
    if bounds is None:
        bounds = U
    bounds = np.asarray(bounds, dtype=float).ravel()
    p_conf = None if np.all(np.isnan(bounds)) else float(np.mean(Z <= bounds))
    return RunMetrics(
        p_A=n_acc / Z.size,
        p_bigZ=float(big.mean()),
        p_bigZ_given_A=float((big & accepted).sum() / n_acc) if n_acc else None,
        p_conf=p_conf,
    )


def matched_acceptance_threshold(scores, target_rate=0.7):
    """Threshold accepting about ``target_rate`` of the given validation scores."""
    scores = check_vector(scores, "scores")
    return order_statistic(scores, check_open_unit(target_rate, "target_rate"))


class LabelVarianceScore(BaseEstimator):
    """Local moment estimate max(0, E[Y^2 | x] - E[Y | x]^2) over the k nearest inputs."""

    def __init__(self, k_local=50):
        self.k_local = k_local

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_vector(y, "y")
        if not 1 <= self.k_local <= len(X):
            raise ValidationError(f"k_local={self.k_local} must lie in [1, {len(X)}]")
        self.tree_, self.y_ = cKDTree(X), y
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        _, idx = self.tree_.query(check_matrix(X), k=self.k_local)
        local = self.y_[idx.reshape(len(idx), -1)]
        return np.maximum(0.0, (local ** 2).mean(axis=1) - local.mean(axis=1) ** 2)

    def predict_sd(self, X):
        return np.sqrt(self.predict(X))


class IsolationFlagScore(BaseEstimator):
    """Isolation-forest anomaly score, oriented so larger means more anomalous."""

    def __init__(self, n_trees=100, subsample=256, random_state=0):
        self.n_trees = n_trees
        self.subsample = subsample
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X)
        self.forest_ = IsolationForest(
            n_estimators=self.n_trees, max_samples=min(self.subsample, len(X)),
            random_state=self.random_state).fit(X)
        return self

    def predict(self, X):
        check_is_fitted(self, "forest_")
        return -self.forest_.score_samples(check_matrix(X))


def fit_iflag(features, n_trees=100, subsample=256, seed=0):
    return IsolationFlagScore(n_trees, subsample, seed).fit(features)


def fit_label_variance(features, target, k_local=50):
    return LabelVarianceScore(k_local).fit(features, target)
