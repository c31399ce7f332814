"""Conformally calibrated per-input loss-quantile scores and loss-controlled flagging."""

from .calibration import LossQuantileScorer, calibrate_level, invert_cdf
from .dataset import (SplitDataset, Standardizer, SyntheticSpec, TabularData,
                      generate_synthetic, load_csv, make_splits, write_csv)
from .engines import (BootstrapGaussianEnsemble, ConstantCdfEngine, KNNEmpiricalEngine,
                      envelope_cdf, fit_engine, mean_cdf)
from .evaluation import (IsolationFlagScore, LabelVarianceScore, RunMetrics,
                         compute_metrics, matched_acceptance_threshold)
from .flagging import (FlagRule, TuneReport, certificate_epsilons, certify_lambda,
                       default_rule, tune_alpha, tune_lambda)
from .predictors import KNNRegressor, LinearOLS, fit_predictor, realized_losses, tau_from_quantile
from .scarcity import ScarcityIndex

__version__ = "0.1.0"
