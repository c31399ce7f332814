"""Split-conformal calibration of a loss CDF engine into the upper loss bound U_alpha(x)."""

from __future__ import annotations

import copy

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (ValidationError, ceil_rank, check_matrix, check_open_unit,
                          check_vector)
from .engines import engine_from_dict, envelope_cdf, make_engine, mean_cdf
from .scarcity import ScarcityIndex

Z_TOL = 1e-8
MAX_DOUBLINGS = 200
AGGREGATIONS = ("mean", "envelope")


class BracketError(RuntimeError):
    """The aggregated CDF never rose above the target level."""


def aggregate(draws, z, gamma=None):
    """Aggregated CDF at z: the draw mean if gamma is None, else the gamma-envelope."""
    values = draws.cdf(z)
    return mean_cdf(values) if gamma is None else envelope_cdf(values, gamma)


def calibrate_level(W, alpha):
    """Order statistic W_(k), k = ceil((1 - alpha)(n2 + 1)); 1 when k exceeds n2."""
    alpha = check_open_unit(alpha, "alpha")
    W = np.sort(check_vector(W, "W"))
    n2 = len(W)
    k = ceil_rank(1.0 - alpha, n2 + 1)
    return float(W[k - 1]) if k <= n2 else 1.0


def invert_cdf(cdf, t, z_start=1.0, tol=Z_TOL):
    """Upper generalized inverse sup{z >= 0 : F(z) <= t}, vectorized over rows.

    ``cdf`` maps a vector of z (one per row) to the row-wise CDF values. The bracket
    [0, z_start] is doubled until F(hi) > t, then bisected until hi - lo <= tol; the
    returned hi satisfies F(hi) > t >= F(hi - tol). Rows with t >= 1 map to +inf and
    rows whose CDF already exceeds t at 0 map to 0.
    """
    t = np.asarray(t, dtype=float)
    z0 = np.zeros(t.shape if t.ndim else ())
    n = len(cdf(np.atleast_1d(z0))) if t.ndim == 0 else len(t)
    t = np.broadcast_to(t, (n,)).astype(float)
    lo = np.zeros(n)
    hi = np.full(n, max(float(z_start), 1e-12))
    out = np.full(n, np.inf)
    finite = t < 1.0
    at_zero = finite & (cdf(lo) > t)
    out[at_zero] = 0.0
    active = finite & ~at_zero
    low = active & (cdf(hi) <= t)
    doublings = 0
    while np.any(low):
        if doublings == MAX_DOUBLINGS:
            raise BracketError(
                f"CDF never exceeded t after {MAX_DOUBLINGS} doublings")
        lo[low] = hi[low]
        hi[low] *= 2.0
        low &= cdf(hi) <= t
        doublings += 1
    open_ = active & (hi - lo > tol)
    while np.any(open_):
        mid = 0.5 * (lo + hi)
        stuck = open_ & ((mid <= lo) | (mid >= hi))
        open_ &= ~stuck
        below = cdf(mid) <= t
        lo = np.where(open_ & below, mid, lo)
        hi = np.where(open_ & ~below, mid, hi)
        open_ &= hi - lo > tol
    out[active] = hi[active]
    return out


class LossQuantileScorer(BaseEstimator):
    """Calibrated upper loss bound U_alpha(x) for a frozen predictor.

    ``fit`` trains the loss CDF engine on the first calibration half, ``calibrate``
    computes PIT values on the second half and the conformal level ``t_``, and
    ``predict`` inverts the aggregated CDF at ``t_``.

    Parameters
    ----------
    engine : str
        ``"bootstrap_gaussian_ensemble"``, ``"knn_empirical"`` or ``"constant"``.
    engine_params : dict, optional
        Keyword arguments for the engine.
    aggregation : {"mean", "envelope"}
        How per-draw CDFs are combined.
    gamma : float or "scarcity"
        Envelope level; ``"scarcity"`` resolves gamma(x) per input from a kNN index
        built on the engine's training inputs.
    scarcity_params : dict, optional
        Keyword arguments for :class:`~locus.scarcity.ScarcityIndex`.
    alpha : float
        Target tail level in (0, 1).
    """

    def __init__(self, engine="bootstrap_gaussian_ensemble", engine_params=None,
                 aggregation="mean", gamma="scarcity", scarcity_params=None, alpha=0.1):
        self.engine = engine
        self.engine_params = engine_params
        self.aggregation = aggregation
        self.gamma = gamma
        self.scarcity_params = scarcity_params
        self.alpha = alpha

    def _check_mode(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValidationError(f"aggregation must be one of {AGGREGATIONS}")
        if self.aggregation == "envelope" and self.gamma != "scarcity":
            if not 0.0 < float(self.gamma) <= 1.0:
                raise ValidationError(f"gamma must lie in (0, 1], got {self.gamma}")

    def fit(self, X, z):
        self._check_mode()
        check_open_unit(self.alpha, "alpha")
        X = check_matrix(X)
        self.engine_ = make_engine(self.engine, **(self.engine_params or {})).fit(X, z)
        self.scarcity_ = None
        if self.aggregation == "envelope" and self.gamma == "scarcity":
            self.scarcity_ = ScarcityIndex(**(self.scarcity_params or {})).fit(X)
        return self

    def gamma_for(self, X):
        """Per-row envelope level, or None in mean mode."""
        if self.aggregation == "mean":
            return None
        if self.scarcity_ is not None:
            return self.scarcity_.gamma(X)
        return np.full(len(check_matrix(X)), float(self.gamma))

    def predictive_cdf(self, X, z):
        check_is_fitted(self, "engine_")
        X = check_matrix(X)
        return aggregate(self.engine_.conditional(X), z, self.gamma_for(X))

    def pit_values(self, X, z):
        z = check_vector(z, "z")
        return self.predictive_cdf(X, z)

    def calibrate(self, X, z):
        W = self.pit_values(X, z)
        self.pit_values_ = np.sort(W)
        self.n2_ = len(W)
        self.t_ = calibrate_level(self.pit_values_, self.alpha)
        return self

    def invert(self, X, t):
        """F~^{-1}(t | x) for each row, t scalar or per-row."""
        check_is_fitted(self, "engine_")
        X = check_matrix(X)
        draws = self.engine_.conditional(X)
        gamma = self.gamma_for(X)
        return invert_cdf(lambda z: aggregate(draws, z, gamma), t,
                          z_start=self.engine_.support_max_)

    def predict(self, X):
        check_is_fitted(self, "t_")
        return self.invert(X, self.t_)

    def with_alpha(self, alpha):
        """Same engine and PIT values, recalibrated at another tail level."""
        check_is_fitted(self, "t_")
        other = copy.copy(self)
        other.alpha = check_open_unit(alpha, "alpha")
        other.t_ = calibrate_level(self.pit_values_, other.alpha)
        return other

    def coverage(self, X, z):
        return float(np.mean(check_vector(z, "z") <= self.predict(X)))

    def to_dict(self):
        check_is_fitted(self, "t_")
        return {
            "params": self.get_params(),
            "engine": self.engine_.to_dict(),
            "scarcity": None if self.scarcity_ is None else self.scarcity_.to_dict(),
            "alpha": self.alpha, "t": self.t_, "n2": self.n2_,
            "pit_values": self.pit_values_.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        scorer = cls(**d["params"])
        scorer.engine_ = engine_from_dict(d["engine"])
        scorer.scarcity_ = (None if d["scarcity"] is None
                            else ScarcityIndex.from_dict(d["scarcity"]))
        scorer.pit_values_ = np.asarray(d["pit_values"], dtype=float)
        scorer.n2_ = int(d["n2"])
        scorer.t_ = float(d["t"])
        if calibrate_level(scorer.pit_values_, scorer.alpha) != scorer.t_:
            raise ValidationError("stored level t does not match the stored PIT values")
        return scorer


def pit_values(scorer, X, z):
    return scorer.pit_values(X, z)


def score(scorer, X):
    return scorer.predict(X)
