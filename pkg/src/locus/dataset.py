"""Tabular data ingestion, standardization, the five-way split and synthetic generators."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ValidationError, check_matrix, check_random_state

SPLIT_NAMES = ("train", "cal_d1", "cal_d2", "validation", "test")


@dataclass(frozen=True)
class TabularData:
    features: np.ndarray
    target: np.ndarray
    column_names: tuple = ()

    def __post_init__(self):
        X = check_matrix(self.features, "features")
        y = np.asarray(self.target, dtype=float).ravel()
        if X.shape[0] < 1:
            raise ValidationError("TabularData needs at least one row")
        if y.shape[0] != X.shape[0]:
            raise ValidationError(
                f"target length {y.shape[0]} does not match row count {X.shape[0]}")
        if not np.all(np.isfinite(y)):
            raise ValidationError("target contains non-finite values")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValidationError(
                f"{len(names)} column names for {X.shape[1]} feature columns")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "column_names", names)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def take(self, idx):
        idx = np.asarray(idx, dtype=int)
        return TabularData(self.features[idx], self.target[idx], self.column_names)


def _parse_cell(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(
            f"non-numeric cell {text!r} at row {row}, column {column!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"non-finite cell {text!r} at row {row}, column {column!r}")
    return value


def read_feature_csv(path):
    """Read a headered numeric CSV. Returns (header, matrix); rows are 1-based in errors."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: missing header row") from None
        rows = []
        for lineno, raw in enumerate(reader, start=1):
            if not raw:
                continue
            if len(raw) != len(header):
                raise ValidationError(
                    f"row {lineno} has {len(raw)} cells, header has {len(header)}")
            rows.append([_parse_cell(c.strip(), lineno, header[j]) for j, c in enumerate(raw)])
    matrix = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    return header, matrix


def load_csv(path, target_column):
    header, matrix = read_feature_csv(path)
    if target_column not in header:
        raise ValidationError(f"target column {target_column!r} not in header {header}")
    j = header.index(target_column)
    names = tuple(h for h in header if h != target_column)
    if not names:
        raise ValidationError("no feature columns besides the target")
    features = np.delete(matrix, j, axis=1)
    return TabularData(features, matrix[:, j], names)


def write_csv(data, path, target_column="y"):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*data.column_names, target_column])
        for row, y in zip(data.features, data.target):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(y))])


class Standardizer(TransformerMixin, BaseEstimator):
    """Affine feature/target standardization with the population (divide-by-n) sd.

    Parameters are fit once, on the training split, and applied unchanged elsewhere.
    """

    def fit(self, X, y=None, column_names=None):
        X = check_matrix(X)
        names = column_names or [f"x{j}" for j in range(X.shape[1])]
        sds = X.std(axis=0)
        bad = [names[j] for j in np.flatnonzero(sds <= 0)]
        if bad:
            raise ValidationError(f"constant column(s) cannot be standardized: {bad}")
        self.feature_means_ = X.mean(axis=0)
        self.feature_sds_ = sds
        if y is not None:
            y = np.asarray(y, dtype=float).ravel()
            sd = y.std()
            if sd <= 0:
                raise ValidationError("constant target cannot be standardized")
            self.target_mean_ = float(y.mean())
            self.target_sd_ = float(sd)
        else:
            self.target_mean_, self.target_sd_ = 0.0, 1.0
        return self

    def transform(self, X):
        return (check_matrix(X) - self.feature_means_) / self.feature_sds_

    def inverse_transform(self, X):
        return check_matrix(X) * self.feature_sds_ + self.feature_means_

    def transform_target(self, y):
        return (np.asarray(y, dtype=float) - self.target_mean_) / self.target_sd_

    def inverse_transform_target(self, y):
        return np.asarray(y, dtype=float) * self.target_sd_ + self.target_mean_

    def loss_scale(self, loss="absolute"):
        """Factor converting a standardized loss back to target units."""
        return self.target_sd_ ** 2 if loss == "squared" else self.target_sd_

    def apply(self, data):
        return TabularData(self.transform(data.features),
                           self.transform_target(data.target), data.column_names)

    def invert(self, data):
        return TabularData(self.inverse_transform(data.features),
                           self.inverse_transform_target(data.target), data.column_names)

    def to_dict(self):
        return {"feature_means": self.feature_means_.tolist(),
                "feature_sds": self.feature_sds_.tolist(),
                "target_mean": self.target_mean_, "target_sd": self.target_sd_}

    @classmethod
    def from_dict(cls, d):
        obj = cls()
        obj.feature_means_ = np.asarray(d["feature_means"], dtype=float)
        obj.feature_sds_ = np.asarray(d["feature_sds"], dtype=float)
        obj.target_mean_ = float(d["target_mean"])
        obj.target_sd_ = float(d["target_sd"])
        return obj


def fit_standardizer(data):
    return Standardizer().fit(data.features, data.target, list(data.column_names))


@dataclass(frozen=True)
class SplitDataset:
    train: TabularData
    cal_d1: TabularData
    cal_d2: TabularData
    validation: TabularData
    test: TabularData
    seed: int
    fractions: tuple
    indices: dict = field(repr=False, compare=False, default_factory=dict)
    standardizer: Standardizer | None = field(repr=False, compare=False, default=None)

    def parts(self):
        return {name: getattr(self, name) for name in SPLIT_NAMES}

    def standardized(self):
        """Fit a standardizer on the train split and apply it to all five parts."""
        scaler = fit_standardizer(self.train)
        parts = {name: scaler.apply(part) for name, part in self.parts().items()}
        return SplitDataset(**parts, seed=self.seed, fractions=self.fractions,
                            indices=self.indices, standardizer=scaler)


def split_sizes(n, fractions, cal_d1_fraction):
    """Floor allocation; leftover rows go to train."""
    _, n_cal, n_val, n_test = (math.floor(f * n + 1e-9) for f in fractions)
    n_train = n - n_cal - n_val - n_test
    n_d1 = math.floor(cal_d1_fraction * n_cal + 1e-9)
    return n_train, n_d1, n_cal - n_d1, n_val, n_test


def make_splits(data, fractions=(0.4, 0.4, 0.1, 0.1), cal_d1_fraction=0.5, seed=0):
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 4 or any(f <= 0 for f in fractions):
        raise ValidationError(f"fractions must be four positive reals, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-12:
        raise ValidationError(f"fractions must sum to 1, got {sum(fractions)!r}")
    if not 0.0 < cal_d1_fraction < 1.0:
        raise ValidationError(f"cal_d1_fraction must lie in (0, 1), got {cal_d1_fraction}")
    sizes = split_sizes(len(data), fractions, cal_d1_fraction)
    empty = [name for name, size in zip(SPLIT_NAMES, sizes) if size < 1]
    if empty:
        raise ValidationError(f"split(s) {empty} empty for n={len(data)}")
    order = np.random.default_rng(seed).permutation(len(data))
    bounds = np.cumsum((0,) + sizes)
    indices = {name: order[bounds[i]:bounds[i + 1]] for i, name in enumerate(SPLIT_NAMES)}
    parts = {name: data.take(idx) for name, idx in indices.items()}
    return SplitDataset(**parts, seed=seed, fractions=fractions, indices=indices)


# --- synthetic generators -------------------------------------------------------------

def _mean_fn(kind, params, x):
    p = params
    if kind == "zero":
        return np.zeros_like(x)
    if kind == "linear":
        return p.get("intercept", 0.0) + p.get("slope", 1.0) * x
    if kind == "sine":
        return (p.get("amplitude", 1.0) * np.sin(p.get("frequency", 2.0) * x)
                + p.get("slope", 0.0) * x)
    if kind == "quadratic":
        return p.get("intercept", 0.0) + p.get("curvature", 0.5) * x ** 2
    raise ValidationError(f"unknown mean_fn {kind!r}")


def _scale_fn(kind, params, x):
    p = params
    if kind == "constant":
        return np.full_like(x, p.get("value", 1.0))
    if kind == "linear_abs":
        return p.get("base", 0.1) + p.get("slope", 0.15) * np.abs(x)
    if kind == "exp":
        return p.get("base", 0.5) * np.exp(p.get("rate", 0.3) * x)
    raise ValidationError(f"unknown scale_fn {kind!r}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Y = f(x0) + sigma(x0) * eps; only the first feature drives the signal."""

    mean_fn: str = "sine"
    mean_params: dict = field(default_factory=dict)
    scale_fn: str = "linear_abs"
    scale_params: dict = field(default_factory=dict)
    design: str = "normal"
    design_params: dict = field(default_factory=dict)
    n_features: int = 1
    noise: str = "gaussian"
    noise_df: float = 5.0
    n_samples: int = 2000
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown synthetic field(s): {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        return SyntheticSpec(**{**self.to_dict(), **changes})


class SyntheticOracle:
    """Closed-form conditional loss laws for a synthetic spec and any fixed predictor."""

    def __init__(self, spec):
        self.spec = spec
        self.noise = (stats.norm() if spec.noise == "gaussian"
                      else stats.t(df=spec.noise_df))

    def mean(self, X):
        return _mean_fn(self.spec.mean_fn, self.spec.mean_params, check_matrix(X)[:, 0])

    def scale(self, X):
        return _scale_fn(self.spec.scale_fn, self.spec.scale_params, check_matrix(X)[:, 0])

    def loss_cdf(self, X, pred, z, loss="absolute"):
        """P(L(pred, Y) <= z | X = x), vectorized over rows."""
        offset = np.asarray(pred, dtype=float) - self.mean(X)
        sigma = self.scale(X)
        z = np.broadcast_to(np.asarray(z, dtype=float), offset.shape)
        r = np.sqrt(np.clip(z, 0.0, None)) if loss == "squared" else np.clip(z, 0.0, None)
        # |offset - sigma*eps| <= r  <=>  (offset - r)/sigma <= eps <= (offset + r)/sigma
        upper = self.noise.cdf((offset + r) / sigma)
        lower = self.noise.cdf((offset - r) / sigma)
        return np.where(z < 0, 0.0, upper - lower)

    def exceed_prob(self, X, pred, tau, loss="absolute"):
        return 1.0 - self.loss_cdf(X, pred, tau, loss)

    def loss_quantile(self, X, pred, level, loss="absolute"):
        """Conditional level-quantile of the loss, by scalar root-finding per row."""
        X = check_matrix(X)
        pred = np.asarray(pred, dtype=float).ravel()
        out = np.empty(len(pred))
        for i in range(len(pred)):
            xi = X[i:i + 1]
            f = lambda z: self.loss_cdf(xi, pred[i:i + 1], z, loss)[0] - level  # noqa: E731
            hi = 1.0
            while f(hi) < 0:
                hi *= 2.0
            out[i] = optimize.brentq(f, 0.0, hi, xtol=1e-12)
        return out


def _design(spec, rng, n):
    p = spec.design_params
    if spec.design == "uniform":
        return rng.uniform(p.get("low", -3.0), p.get("high", 3.0), size=(n, spec.n_features))
    if spec.design == "normal":
        return rng.normal(p.get("loc", 0.0), p.get("scale", 1.0), size=(n, spec.n_features))
    raise ValidationError(f"unknown design {spec.design!r}")


def generate_synthetic(spec):
    """Draw a sample from spec; returns (TabularData, SyntheticOracle)."""
    if spec.noise not in ("gaussian", "student_t"):
        raise ValidationError(f"unknown noise family {spec.noise!r}")
    if spec.n_samples < 1 or spec.n_features < 1:
        raise ValidationError("n_samples and n_features must be positive")
    rng = check_random_state(spec.seed)
    oracle = SyntheticOracle(spec)
    X = _design(spec, rng, spec.n_samples)
    sigma = oracle.scale(X)
    if np.any(sigma <= 0):
        raise ValidationError("scale_fn produced a nonpositive sigma(x)")
    eps = (rng.standard_normal(spec.n_samples) if spec.noise == "gaussian"
           else rng.standard_t(spec.noise_df, size=spec.n_samples))
    y = oracle.mean(X) + sigma * eps
    return TabularData(X, y), oracle
