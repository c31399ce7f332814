"""kNN-radius scarcity score and its logistic map to an envelope level gamma(x)."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_matrix, order_statistic


class ScarcityIndex(TransformerMixin, BaseEstimator):
    """Maps inputs to gamma(x) in (gamma_min, gamma_max), smaller where data are sparse.

    The radius r_k(x) is the distance to the k-th nearest reference point. Reference
    radii are computed in-sample with each point counted as its own first neighbour
    (``self_inclusive=True``); q_lo and q_hi are their 0.50 and 0.90 order statistics.
    """

    def __init__(self, n_neighbors=50, q_lo_level=0.5, q_hi_level=0.9, eps=1e-6,
                 gamma_min=0.15, gamma_max=0.9, center=0.0, width=1.0, self_inclusive=True):
        self.n_neighbors = n_neighbors
        self.q_lo_level = q_lo_level
        self.q_hi_level = q_hi_level
        self.eps = eps
        self.gamma_min = gamma_min
        self.gamma_max = gamma_max
        self.center = center
        self.width = width
        self.self_inclusive = self_inclusive

    def fit(self, X, y=None):
        X = check_matrix(X)
        if not 1 <= self.n_neighbors <= len(X):
            raise ValidationError(
                f"n_neighbors={self.n_neighbors} exceeds the {len(X)} reference points")
        if not self.gamma_min < self.gamma_max:
            raise ValidationError("gamma_min must be below gamma_max")
        self.reference_ = X
        self.tree_ = cKDTree(X)
        if self.self_inclusive:
            ref_radii = self._radius(X, self.n_neighbors)
        else:
            if self.n_neighbors + 1 > len(X):
                raise ValidationError("self-exclusive radii need n_neighbors < n points")
            ref_radii = self._radius(X, self.n_neighbors + 1)
        self.q_lo_ = order_statistic(ref_radii, self.q_lo_level)
        self.q_hi_ = order_statistic(ref_radii, self.q_hi_level)
        return self

    def _radius(self, X, k):
        dist, _ = self.tree_.query(X, k=k)
        return dist.reshape(len(X), -1)[:, -1]

    def radius(self, X):
        check_is_fitted(self, "tree_")
        return self._radius(check_matrix(X), self.n_neighbors)

    def score_from_radius(self, r):
        return (np.asarray(r, dtype=float) - self.q_lo_) / (self.q_hi_ - self.q_lo_ + self.eps)

    def gamma_from_score(self, s):
        s = np.asarray(s, dtype=float)
        return self.gamma_max - (self.gamma_max - self.gamma_min) * expit(
            (s - self.center) / self.width)

    def scarcity_score(self, X):
        return self.score_from_radius(self.radius(X))

    def gamma(self, X):
        return self.gamma_from_score(self.scarcity_score(X))

    def transform(self, X):
        return self.gamma(X).reshape(-1, 1)

    def to_dict(self):
        return {"params": self.get_params(), "reference": self.reference_.tolist(),
                "q_lo": self.q_lo_, "q_hi": self.q_hi_}

    @classmethod
    def from_dict(cls, d):
        index = cls(**d["params"]).fit(d["reference"])
        if (index.q_lo_, index.q_hi_) != (d["q_lo"], d["q_hi"]):
            raise ValidationError("stored scarcity quantiles do not match the rebuilt index")
        return index


def build_index(features, k=50, **constants):
    return ScarcityIndex(n_neighbors=k, **constants).fit(features)
