from statistics import NormalDist

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr

from locus._validation import ValidationError
from locus.calibration import BracketError, LossQuantileScorer, calibrate_level, invert_cdf
from locus.dataset import SyntheticSpec, generate_synthetic
from locus.engines import StepDraws
from locus.predictors import LinearOLS

from _oracle import oracle_scorer


def _synthetic_losses(n, seed, g=None):
    data, oracle = generate_synthetic(SyntheticSpec(n_samples=n, seed=seed))
    if g is None:
        train, _ = generate_synthetic(SyntheticSpec(n_samples=500, seed=seed + 99_991))
        g = LinearOLS().fit(train.features, train.target)
    return data.features, np.abs(g.predict(data.features) - data.target), oracle, g


def test_calibrate_level_examples():
    W = np.arange(1, 10) / 10.0
    assert calibrate_level(W, 0.1) == W.max()
    assert calibrate_level([0.9, 0.1, 0.5], 0.5) == 0.5
    assert calibrate_level([0.9, 0.1, 0.5], 0.1) == 1.0
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValidationError):
            calibrate_level(W, bad)


def test_invert_standard_gaussian():
    U = invert_cdf(lambda z: ndtr(z), np.array([0.5, 0.9]))
    assert U[0] == pytest.approx(0.0, abs=1e-6)
    assert U[1] == pytest.approx(NormalDist().inv_cdf(0.9), abs=1e-5)
    assert U[1] == pytest.approx(1.281552, abs=1e-5)


def test_invert_step_cdf_returns_upper_step():
    steps = StepDraws(np.array([[0.5, 1.0, 2.0, 4.0]]))
    cdf = lambda z: steps.cdf(z)[:, 0]  # noqa: E731
    # t strictly between levels 0.5 and 0.75 -> location of the 0.75 step
    assert invert_cdf(cdf, 0.6)[0] == pytest.approx(2.0, abs=1e-7)
    # t on a level -> the next step, so that F(Z) <= t  <=>  Z < U
    assert invert_cdf(cdf, 0.5)[0] == pytest.approx(2.0, abs=1e-7)
    assert invert_cdf(cdf, 0.1)[0] == pytest.approx(0.5, abs=1e-7)


def test_invert_postconditions(rng):
    t = rng.uniform(0.01, 0.99, size=200)
    scale = rng.uniform(0.1, 5, size=200)
    cdf = lambda z: stats.expon.cdf(z, scale=scale)  # noqa: E731
    U = invert_cdf(cdf, t)
    assert np.all(cdf(U) >= t)
    assert np.all(cdf(U - 1e-6) < t + 1e-6)


def test_invert_edge_levels():
    assert np.isinf(invert_cdf(lambda z: ndtr(z), 1.0)[0])
    assert invert_cdf(lambda z: np.full(np.shape(z), 0.7), 0.5)[0] == 0.0
    with pytest.raises(BracketError):
        invert_cdf(lambda z: np.zeros(np.shape(z)), 0.5)


def test_pit_values_shapes_and_lower_limit(rng):
    X = rng.normal(size=(200, 1))
    z = np.abs(rng.normal(size=200))
    scorer = LossQuantileScorer(engine_params={"n_draws": 5}).fit(X, z)
    assert scorer.pit_values(X[:1], z[:1]).shape == (1,)
    assert np.all(scorer.pit_values(X[:10], np.zeros(10)) <= 1e-9)


def test_pit_uniform_under_oracle_engine():
    passes = 0
    for seed in range(20):
        X, z, oracle, g = _synthetic_losses(5000, seed)
        W = oracle.loss_cdf(X, g.predict(X), z)
        passes += stats.kstest(W, "uniform").statistic < 1.36 / np.sqrt(5000)
    assert passes >= 18


def test_oracle_bound_tracks_true_quantile():
    X1, z1, oracle, g = _synthetic_losses(200, 1)
    X2, z2, _, _ = _synthetic_losses(5000, 2, g)
    scorer = oracle_scorer(oracle, g, X1, z1, X2, z2, alpha=0.1)
    xs = np.random.default_rng(5).normal(size=(50, 1))
    q = oracle.loss_quantile(xs, g.predict(xs), 0.9)
    assert np.mean(np.abs(scorer.predict(xs) - q)) < 0.05


def test_score_monotone_in_alpha_and_deterministic(rng):
    X = rng.normal(size=(400, 1))
    z = np.abs(rng.normal(size=400)) * (0.3 + np.abs(X[:, 0]))
    scorer = LossQuantileScorer(engine_params={"n_draws": 10}, alpha=0.2)
    scorer.fit(X[:200], z[:200]).calibrate(X[200:], z[200:])
    probes = rng.normal(size=(30, 1))
    u_small = scorer.with_alpha(0.05).predict(probes)
    u_large = scorer.with_alpha(0.3).predict(probes)
    assert np.all(u_small >= u_large)
    np.testing.assert_array_equal(scorer.predict(probes), scorer.predict(probes))


@pytest.mark.parametrize("mode", [
    {"engine": "bootstrap_gaussian_ensemble", "aggregation": "mean"},
    {"engine": "bootstrap_gaussian_ensemble", "aggregation": "envelope", "gamma": 0.3},
    {"engine": "bootstrap_gaussian_ensemble", "aggregation": "envelope", "gamma": "scarcity"},
    {"engine": "constant", "aggregation": "mean"},
])
def test_inversion_correctness_continuous(mode):
    X, z, _, _ = _synthetic_losses(1500, 4)
    scorer = LossQuantileScorer(**mode).fit(X[:750], z[:750]).calibrate(X[750:], z[750:])
    probes = np.random.default_rng(0).normal(size=(500, 1)) * 1.5
    gap = scorer.predictive_cdf(probes, scorer.predict(probes)) - scorer.t_
    assert np.all((gap >= 0) & (gap <= 1e-4))


def test_inversion_generalized_inverse_for_step_engine():
    X, z, _, _ = _synthetic_losses(1500, 4)
    scorer = LossQuantileScorer(engine="knn_empirical").fit(X[:750], z[:750])
    scorer.calibrate(X[750:], z[750:])
    probes = np.random.default_rng(0).normal(size=(500, 1)) * 1.5
    U = scorer.predict(probes)
    assert np.all(scorer.predictive_cdf(probes, U) > scorer.t_)
    assert np.all(scorer.predictive_cdf(probes, U - 1e-8) <= scorer.t_)


def test_serialization_reproduces_scores(rng):
    X, z, _, _ = _synthetic_losses(600, 8)
    for mode in ({"aggregation": "envelope", "gamma": "scarcity"},
                 {"engine": "knn_empirical"}):
        scorer = LossQuantileScorer(**mode).fit(X[:300], z[:300]).calibrate(X[300:], z[300:])
        back = LossQuantileScorer.from_dict(scorer.to_dict())
        probes = rng.normal(size=(16, 1))
        np.testing.assert_array_equal(back.predict(probes), scorer.predict(probes))


def test_invalid_modes():
    X = np.zeros((10, 1))
    with pytest.raises(ValidationError):
        LossQuantileScorer(aggregation="median").fit(X, np.ones(10))
    with pytest.raises(ValidationError):
        LossQuantileScorer(aggregation="envelope", gamma=0.0).fit(X, np.ones(10))
    with pytest.raises(ValidationError):
        LossQuantileScorer(alpha=1.2).fit(X, np.ones(10))


@pytest.mark.slow
def test_marginal_validity_ensemble_engine():
    coverage = []
    for seed in range(30):
        X, z, _, _ = _synthetic_losses(6000, 100 + seed)
        scorer = LossQuantileScorer(engine_params={"random_state": seed})
        scorer.fit(X[:2000], z[:2000]).calibrate(X[2000:4000], z[2000:4000])
        coverage.append(scorer.coverage(X[4000:], z[4000:]))
    se = np.sqrt(0.09 / 2000 / 30)
    assert 0.9 - 3 * se <= np.mean(coverage) <= 0.9 + 1 / 2001 + 3 * se
