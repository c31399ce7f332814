import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locus.calibration import LossQuantileScorer
from locus.dataset import SyntheticSpec, generate_synthetic
from locus.flagging import (FlagRule, certificate_epsilons, certify_lambda, default_rule,
                            tune_alpha, tune_lambda)
from locus.predictors import LinearOLS

U4 = np.array([1.0, 2.0, 3.0, 4.0])
EXCEED4 = np.array([False, False, True, True])


def test_boundary_accepts_and_extremes():
    rule = FlagRule(3.0, 0.1, "default_tau")
    assert rule.accept([3.0])[0]
    assert not FlagRule(-1.0, 0.1, "default_tau").accept([0.0, 2.0]).any()
    assert FlagRule(np.inf, 0.1, "default_tau").accept([0.0, 1e300]).all()
    assert not FlagRule(None, 0.1, "certified").accept([0.0]).any()


def test_tune_lambda_examples():
    rule, report = tune_lambda(U4, EXCEED4, U4, eta=0.25, rho_min=0.0)
    np.testing.assert_allclose([r["value"] for r in report.rows], [0, 0, 1 / 3, 0.5])
    assert rule.lam == 3.0
    rule, _ = tune_lambda(U4, EXCEED4, U4, eta=1e-9, rho_min=0.0)
    assert rule.lam == 2.0
    rule, _ = tune_lambda(U4, EXCEED4, U4, eta=0.25, rho_min=0.9)
    assert rule.lam == 4.0
    assert rule.provenance == "tuned_lambda"


def test_tune_lambda_empty_when_nothing_qualifies():
    rule, _ = tune_lambda(U4, EXCEED4, [0.5], eta=0.25, rho_min=0.5)
    assert rule.is_empty


def test_certificate_epsilons_hand_values():
    eps_h, eps_g = certificate_epsilons(2000, 0.1)
    assert eps_g == pytest.approx(0.03037, abs=1e-4)
    assert eps_h == pytest.approx(0.15917, abs=1e-4)


def test_certify_tiny_eta_is_empty(rng):
    u = rng.uniform(size=2000)
    rule, report = certify_lambda(u, np.zeros(2000, bool), np.linspace(0, 1, 50),
                                  eta=0.001, delta=0.1)
    assert rule.is_empty
    assert report.extras["eps_H"] > 0.001


def test_certify_picks_largest_feasible():
    u = np.linspace(0, 1, 5000)
    exceed = u > 0.6
    rule, report = certify_lambda(u, exceed, np.linspace(0, 1, 21), eta=0.25, delta=0.1)
    feasible = [r["candidate"] for r in report.rows if r["feasible"]]
    assert rule.lam == max(feasible)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), eta=st.floats(0.05, 0.5))
def test_certified_is_more_conservative_than_tuned(seed, eta):
    r = np.random.default_rng(seed)
    u = r.uniform(size=3000)
    exceed = r.uniform(size=3000) < 0.05 + 0.6 * u
    grid = np.linspace(0, 1, 40)
    cert, cert_report = certify_lambda(u, exceed, grid, eta=eta, delta=0.1)
    tuned, tuned_report = tune_lambda(u, exceed, grid, eta=eta, rho_min=0.0)
    if not cert.is_empty and not tuned.is_empty:
        assert cert.lam <= tuned.lam
    for c_row, t_row in zip(cert_report.rows, tuned_report.rows):
        if c_row["value"] is not None:
            assert c_row["value"] >= t_row["value"]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=50),
       st.floats(-5, 5), st.floats(0, 5))
def test_nestedness(scores, lam, step):
    small = FlagRule(lam, 0.1, "default_tau").accept(scores)
    large = FlagRule(lam + step, 0.1, "default_tau").accept(scores)
    assert np.all(~small | large)


@pytest.fixture(scope="module")
def fitted_scorer():
    spec = SyntheticSpec(n_samples=3000, seed=2)
    data, _ = generate_synthetic(spec)
    g = LinearOLS().fit(data.features[:500], data.target[:500])
    z = np.abs(g.predict(data.features) - data.target)
    scorer = LossQuantileScorer(engine="knn_empirical", alpha=0.1)
    scorer.fit(data.features[500:1500], z[500:1500])
    scorer.calibrate(data.features[1500:2500], z[1500:2500])
    return scorer, data.features[2500:], z[2500:]


def test_tune_alpha_singleton_and_monotone_acceptance(fitted_scorer):
    scorer, X, z = fitted_scorer
    tau = float(np.quantile(z, 0.7))
    rule, _ = tune_alpha(scorer, X, z, tau, grid=[0.17], eta=0.1, rho_min=0.0)
    assert rule.alpha == 0.17 and rule.lam == tau
    _, report = tune_alpha(scorer, X, z, tau, eta=0.1, rho_min=0.0)
    counts = [r["n_accepted"] for r in report.rows]
    assert counts == sorted(counts)


def test_default_rule(fitted_scorer):
    scorer, _, _ = fitted_scorer
    rule = default_rule(scorer, 0.8)
    assert rule.lam == 0.8 and rule.provenance == "default_tau" and rule.alpha == 0.1


def test_report_serializations():
    rule, report = certify_lambda(U4, EXCEED4, U4, eta=0.3, delta=0.2)
    text = report.to_text()
    assert "q_bar" in text and "EMPTY" in text
    assert '"eps_H"' in report.to_json()
    _, tuned = tune_lambda(U4, EXCEED4, U4, eta=0.25, rho_min=0.0)
    assert "q_hat" in tuned.to_text()


def _oracle_setup(seed, n_cal=4000, n_val=4000, n_test=4000):
    from _oracle import oracle_scorer

    spec = SyntheticSpec(n_samples=500 + n_cal + n_val + n_test, seed=seed)
    data, oracle = generate_synthetic(spec)
    X, y = data.features, data.target
    g = LinearOLS().fit(X[:500], y[:500])
    z = np.abs(g.predict(X) - y)
    a, b, c = 500 + n_cal // 2, 500 + n_cal, 500 + n_cal + n_val
    scorer = oracle_scorer(oracle, g, X[500:a], z[500:a], X[a:b], z[a:b])
    return scorer, (X[b:c], z[b:c]), (X[c:], z[c:])


@pytest.mark.slow
def test_oracle_engine_conditional_rate_near_alpha():
    rates = []
    for seed in range(10):
        scorer, (Xv, zv), (Xt, zt) = _oracle_setup(seed)
        tau = float(np.sort(zv)[int(np.ceil(0.7 * len(zv))) - 1])
        accepted = scorer.predict(Xt) <= tau
        rates.append(np.mean(zt[accepted] > tau))
    assert np.mean(rates) <= 0.1 + 0.03


@pytest.mark.slow
def test_tune_alpha_hits_target_with_oracle_engine():
    errors = []
    grid = [round(0.05 + 0.025 * i, 3) for i in range(11)]
    for seed in range(20):
        scorer, (Xv, zv), (Xt, zt) = _oracle_setup(100 + seed, n_val=3000, n_test=3000)
        tau = float(np.sort(zv)[int(np.ceil(0.7 * len(zv))) - 1])
        rule, _ = tune_alpha(scorer, Xv, zv, tau, grid=grid, eta=0.1, rho_min=0.05)
        accepted = scorer.with_alpha(rule.alpha).predict(Xt) <= tau
        errors.append(abs(np.mean(zt[accepted] > tau) - 0.1))
    assert np.median(errors) <= 0.05
