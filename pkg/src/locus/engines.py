"""Predictive CDF engines for the realized loss Z given X, and their aggregation modes.

An engine is fit on (X, Z) pairs and answers, for a batch of inputs, a matrix of
per-draw CDF values F(z | x, draw s). Aggregation over draws is either the plain
mean or a lower gamma-envelope (an order statistic across draws).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtr
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_matrix, check_vector, check_random_state

_RANK_EPS = 1e-9


class GaussianDraws:
    """Per-draw Gaussian(mean, sd) laws truncated to [0, inf) and renormalized."""

    def __init__(self, means, sds):
        self.means, self.sds = means, sds
        # mean >= 0 for nonnegative losses, so the normalizer is >= 1/2
        self._mass = ndtr(means / sds)

    @property
    def shape(self):
        return self.means.shape

    def cdf(self, z):
        z = np.asarray(z, dtype=float).reshape(-1, 1)
        F = (self._mass - ndtr((self.means - z) / self.sds)) / self._mass
        return np.where(z < 0, 0.0, np.clip(F, 0.0, 1.0))


class StepDraws:
    """Single right-continuous empirical CDF per row, over sorted neighbour losses."""

    def __init__(self, sorted_losses):
        self.sorted_losses = sorted_losses

    @property
    def shape(self):
        return (self.sorted_losses.shape[0], 1)

    def cdf(self, z):
        z = np.asarray(z, dtype=float).reshape(-1, 1)
        return (self.sorted_losses <= z).mean(axis=1, keepdims=True)


class ExponentialDraws:
    """The same exponential law for every row, whatever x is."""

    def __init__(self, n_rows, scale):
        self.n_rows, self.scale = n_rows, scale

    @property
    def shape(self):
        return (self.n_rows, 1)

    def cdf(self, z):
        z = np.broadcast_to(np.asarray(z, dtype=float).reshape(-1, 1), self.shape)
        return np.where(z < 0, 0.0, -np.expm1(-np.clip(z, 0.0, None) / self.scale))


class LossCdfEngine(BaseEstimator):
    """Common surface: ``conditional(X)`` returns a draws object with ``cdf(z)``."""

    kind = None

    def _check_fit_input(self, X, z):
        X = check_matrix(X)
        z = check_vector(z, "z")
        if len(z) != len(X):
            raise ValidationError(f"X has {len(X)} rows but z has {len(z)} entries")
        if np.any(z < 0):
            raise ValidationError("losses must be nonnegative")
        if len(X) < 2:
            raise ValidationError("an engine needs at least 2 points")
        self.support_max_ = float(z.max())
        return X, z

    def cdf_draws(self, X, z):
        return self.conditional(X).cdf(z)

    def mean_cdf(self, X, z):
        return mean_cdf(self.cdf_draws(X, z))

    def envelope_cdf(self, X, z, gamma):
        return envelope_cdf(self.cdf_draws(X, z), gamma)


class BootstrapGaussianEnsemble(LossCdfEngine):
    """Members are kNN local-moment Gaussians, each fit on its own bootstrap resample.

    Member s estimates the local mean and sd of Z from the ``k_local`` nearest points
    of resample s; the sd is floored at ``scale_floor``.
    """

    kind = "bootstrap_gaussian_ensemble"

    def __init__(self, n_draws=30, k_local=50, scale_floor=1e-6, random_state=0):
        self.n_draws = n_draws
        self.k_local = k_local
        self.scale_floor = scale_floor
        self.random_state = random_state

    def fit(self, X, z):
        X, z = self._check_fit_input(X, z)
        if self.n_draws < 1:
            raise ValidationError("n_draws must be at least 1")
        rng = check_random_state(self.random_state)
        resamples = rng.integers(0, len(X), size=(self.n_draws, len(X)))
        return self._fit_resamples(X, z, resamples)

    def _fit_resamples(self, X, z, resamples):
        self.X_, self.z_ = X, z
        self.resamples_ = np.asarray(resamples, dtype=np.int64)
        self.k_eff_ = int(min(self.k_local, max(2, len(X) // 4)))
        self.trees_ = [cKDTree(X[idx]) for idx in self.resamples_]
        return self

    def conditional(self, X):
        check_is_fitted(self, "trees_")
        X = check_matrix(X)
        means = np.empty((len(X), self.n_draws))
        sds = np.empty_like(means)
        for s, (tree, idx) in enumerate(zip(self.trees_, self.resamples_)):
            _, nbr = tree.query(X, k=self.k_eff_)
            local = self.z_[idx[nbr]]
            means[:, s] = local.mean(axis=1)
            sds[:, s] = np.maximum(local.std(axis=1), self.scale_floor)
        return GaussianDraws(means, sds)

    def to_dict(self):
        return {"kind": self.kind, "params": self.get_params(),
                "X": self.X_.tolist(), "z": self.z_.tolist(),
                "resamples": self.resamples_.tolist()}


class KNNEmpiricalEngine(LossCdfEngine):
    """Empirical CDF of Z over the k nearest training inputs, uniform weights."""

    kind = "knn_empirical"

    def __init__(self, n_neighbors=100):
        self.n_neighbors = n_neighbors

    def fit(self, X, z):
        X, z = self._check_fit_input(X, z)
        if not 1 <= self.n_neighbors <= len(X):
            raise ValidationError(
                f"n_neighbors={self.n_neighbors} must lie in [1, {len(X)}]")
        self.X_, self.z_ = X, z
        self.tree_ = cKDTree(X)
        return self

    @property
    def n_draws_(self):
        return 1

    def conditional(self, X):
        check_is_fitted(self, "tree_")
        _, nbr = self.tree_.query(check_matrix(X), k=self.n_neighbors)
        nbr = nbr.reshape(len(nbr), -1)
        return StepDraws(np.sort(self.z_[nbr], axis=1))

    def to_dict(self):
        return {"kind": self.kind, "params": self.get_params(),
                "X": self.X_.tolist(), "z": self.z_.tolist()}


class ConstantCdfEngine(LossCdfEngine):
    """Deliberately misspecified: Exponential(scale) for every x, ignoring the data."""

    kind = "constant"

    def __init__(self, scale=1.0):
        self.scale = scale

    def fit(self, X, z):
        self._check_fit_input(X, z)
        if self.scale <= 0:
            raise ValidationError("scale must be positive")
        self.fitted_ = True
        return self

    def conditional(self, X):
        check_is_fitted(self, "fitted_")
        return ExponentialDraws(len(check_matrix(X)), self.scale)

    def to_dict(self):
        return {"kind": self.kind, "params": self.get_params(),
                "support_max": self.support_max_}


ENGINES = {cls.kind: cls for cls in
           (BootstrapGaussianEnsemble, KNNEmpiricalEngine, ConstantCdfEngine)}


def make_engine(kind, **params):
    try:
        return ENGINES[kind](**params)
    except KeyError:
        raise ValidationError(f"unknown engine kind {kind!r}") from None


def fit_engine(X, z, kind="bootstrap_gaussian_ensemble", **params):
    return make_engine(kind, **params).fit(X, z)


def engine_from_dict(d):
    engine = make_engine(d["kind"], **d["params"])
    if d["kind"] == "constant":
        engine.support_max_ = float(d["support_max"])
        engine.fitted_ = True
        return engine
    X = np.asarray(d["X"], dtype=float)
    z = np.asarray(d["z"], dtype=float)
    if d["kind"] == "bootstrap_gaussian_ensemble":
        engine.support_max_ = float(z.max())
        return engine._fit_resamples(X, z, np.asarray(d["resamples"]))
    return engine.fit(X, z)


def mean_cdf(draws):
    """Posterior-mean aggregation of an (n, S) matrix of per-draw CDF values."""
    return np.asarray(draws, dtype=float).mean(axis=1)


def envelope_rank(gamma, n_draws):
    """0-based order-statistic index ceil(gamma * S) - 1 for scalar or per-row gamma."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any((gamma <= 0) | (gamma > 1)):
        raise ValidationError("gamma must lie in (0, 1]")
    rank = np.ceil(gamma * n_draws - _RANK_EPS).astype(int)
    return np.clip(rank, 1, n_draws) - 1


def envelope_cdf(draws, gamma):
    """Lower gamma-envelope: the ceil(gamma*S)-th smallest draw in each row."""
    draws = np.asarray(draws, dtype=float)
    rank = np.broadcast_to(envelope_rank(gamma, draws.shape[1]), draws.shape[:1])
    return np.sort(draws, axis=1)[np.arange(len(draws)), rank]
