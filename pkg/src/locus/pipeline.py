"""End-to-end fit: split, standardize, fit g, set tau, fit the engine, calibrate."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .calibration import LossQuantileScorer
from .dataset import generate_synthetic, load_csv, make_splits
from .predictors import fit_predictor, realized_losses, tau_from_quantile


@dataclass
class FittedPipeline:
    splits: object          # standardized SplitDataset
    predictor: object
    loss: str
    tau: float              # standardized loss units
    scorer: LossQuantileScorer
    oracle: object = None   # SyntheticOracle for synthetic sources

    @property
    def standardizer(self):
        return self.splits.standardizer

    def losses(self, part):
        return realized_losses(self.predictor, self.loss, part)

    def loss_scale(self):
        return self.standardizer.loss_scale(self.loss)

    def raw_predictions(self, X_std):
        return self.standardizer.inverse_transform_target(self.predictor.predict(X_std))

    def split_hash(self):
        h = hashlib.sha256()
        for name in sorted(self.splits.indices):
            h.update(name.encode())
            h.update(np.asarray(self.splits.indices[name], dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


def load_data(config, seed=None):
    if config.data_source == "csv":
        return load_csv(config.csv_path, config.target_column), None
    return generate_synthetic(config.synthetic_spec(seed))


def engine_params(config, seed):
    params = dict(config.engine_params)
    if config.engine == "bootstrap_gaussian_ensemble":
        params.setdefault("random_state", seed)
    return params


def make_scorer(config, seed, aggregation=None, gamma=None):
    return LossQuantileScorer(
        engine=config.engine, engine_params=engine_params(config, seed),
        aggregation=aggregation or config.aggregation,
        gamma=config.gamma if gamma is None else gamma,
        scarcity_params=dict(config.scarcity_params), alpha=config.alpha)


def fit_pipeline(config, seed=None, data=None):
    """Run the calibration pipeline for one seed (defaults to ``config.seed``)."""
    seed = config.seed if seed is None else seed
    oracle = None
    if data is None:
        data, oracle = load_data(config, seed)
    splits = make_splits(data, config.fractions, config.cal_d1_fraction, seed).standardized()
    predictor = fit_predictor(splits.train, config.predictor, **config.predictor_params)
    pipe = FittedPipeline(splits, predictor, config.loss, float("nan"), None, oracle)
    tau = (config.tau / pipe.loss_scale() if config.tau is not None
           else tau_from_quantile(pipe.losses(splits.validation), config.tau_level))
    pipe.tau = float(tau)
    scorer = make_scorer(config, seed)
    scorer.fit(splits.cal_d1.features, pipe.losses(splits.cal_d1))
    scorer.calibrate(splits.cal_d2.features, pipe.losses(splits.cal_d2))
    pipe.scorer = scorer
    return pipe
