"""Repeated-seed benchmark: every method scored on the same test split per seed."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .evaluation import (IsolationFlagScore, LabelVarianceScore, compute_metrics,
                         matched_acceptance_threshold)
from .flagging import certify_lambda, default_lambda_grid, tune_alpha, tune_lambda
from .pipeline import fit_pipeline, make_scorer

logger = logging.getLogger(__name__)

METRICS = ("p_A", "p_bigZ", "p_bigZ_given_A", "p_conf")


def _locus_methods(config, pipe, seed):
    s = pipe.splits
    X_val, z_val = s.validation.features, pipe.losses(s.validation)
    exceed_val = z_val > pipe.tau
    scorer, tau = pipe.scorer, pipe.tau
    u_val = scorer.predict(X_val)
    grid = default_lambda_grid(u_val, config.lambda_grid_size)
    out = {}
    wanted = set(config.methods)
    if "locus" in wanted:
        out["locus"] = (scorer, tau)
    if "locus_gamma" in wanted:
        env = make_scorer(config, seed, aggregation="envelope", gamma="scarcity")
        env.fit(s.cal_d1.features, pipe.losses(s.cal_d1))
        env.calibrate(s.cal_d2.features, pipe.losses(s.cal_d2))
        out["locus_gamma"] = (env, tau)
    if "locus_tuned" in wanted:
        rule, _ = tune_lambda(u_val, exceed_val, grid, config.eta, config.rho_min)
        out["locus_tuned"] = (scorer, rule.lam)
    if "locus_alpha" in wanted:
        rule, _ = tune_alpha(scorer, X_val, z_val, tau, config.alpha_grid,
                             config.eta, config.rho_min)
        out["locus_alpha"] = (scorer if rule.is_empty else scorer.with_alpha(rule.alpha),
                              rule.lam)
    if "locus_certified" in wanted:
        rule, _ = certify_lambda(u_val, exceed_val, grid, config.eta, config.delta)
        out["locus_certified"] = (scorer, rule.lam)
    if "locus_matched" in wanted:
        out["locus_matched"] = (scorer, matched_acceptance_threshold(
            u_val, config.target_acceptance))
    return out


def run_once(config, seed):
    """Metrics for every configured method on one seed's test split."""
    pipe = fit_pipeline(config, seed)
    s = pipe.splits
    X_test, z_test = s.test.features, pipe.losses(s.test)
    metrics = {}
    for name, (scorer, lam) in _locus_methods(config, pipe, seed).items():
        metrics[name] = compute_metrics(z_test, scorer.predict(X_test), pipe.tau, lam)
    baselines = {}
    if "label_variance" in config.methods:
        k = min(config.baseline_k_local, len(s.train))
        baselines["label_variance"] = LabelVarianceScore(k).fit(
            s.train.features, s.train.target)
    if "iflag" in config.methods:
        baselines["iflag"] = IsolationFlagScore(
            config.iflag_trees, config.iflag_subsample, seed).fit(s.train.features)
    for name, model in baselines.items():
        lam = matched_acceptance_threshold(model.predict(s.validation.features),
                                           config.target_acceptance)
        metrics[name] = compute_metrics(z_test, model.predict(X_test), pipe.tau, lam,
                                        bounds=np.full(len(z_test), np.nan))
    return {"seed": int(seed), "split_hash": pipe.split_hash(), "tau": pipe.tau,
            "t": pipe.scorer.t_, "metrics": {k: v.to_dict() for k, v in metrics.items()}}


def _safe_run(config, seed):
    try:
        return run_once(config, seed)
    except Exception as exc:  # recorded per seed, never dropped silently
        return {"seed": int(seed), "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class BenchmarkResult:
    config: dict
    config_hash: str
    runs: list
    failures: list
    summary: dict
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {"config": self.config, "config_hash": self.config_hash,
                "runs": self.runs, "failures": self.failures,
                "summary": self.summary, "provenance": self.provenance}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self):
        return format_table(self.summary)


def summarize(runs, methods):
    """Median and 5th/95th percentiles per method and metric over seeds with a value."""
    summary = {}
    for method in methods:
        cells = {}
        for metric in METRICS:
            values = sorted(r["metrics"][method][metric] for r in runs
                            if method in r["metrics"]
                            and r["metrics"][method][metric] is not None)
            if values:
                p5, med, p95 = np.percentile(values, [5, 50, 95])
                cells[metric] = {"median": float(med), "p5": float(p5),
                                 "p95": float(p95), "n": len(values)}
            else:
                cells[metric] = None
        summary[method] = cells
    return summary


def run_benchmark(config, seeds=None):
    seeds = list(config.seeds if seeds is None else seeds)
    if config.n_jobs == 1:
        results = [_safe_run(config, s) for s in seeds]
    else:
        results = Parallel(n_jobs=config.n_jobs)(delayed(_safe_run)(config, s) for s in seeds)
    runs = [r for r in results if "error" not in r]
    failures = [r for r in results if "error" in r]
    if failures:
        logger.warning("%d of %d seeds failed", len(failures), len(seeds))
    return BenchmarkResult(
        config=config.to_dict(), config_hash=config.hash(), runs=runs, failures=failures,
        summary=summarize(runs, config.methods),
        provenance={"seeds": seeds, "created": time.strftime("%Y-%m-%dT%H:%M:%S")})


def format_cell(cell):
    if cell is None:
        return "-- (--; --)"
    return f"{100 * cell['median']:.1f} ({100 * cell['p5']:.1f}; {100 * cell['p95']:.1f})"


def format_table(summary):
    """Plain-text table, cells as ``median (p5; p95)`` in percent."""
    header = f"{'method':<16}" + "".join(f"{m:>24}" for m in METRICS)
    lines = [header, "-" * len(header)]
    for method, cells in summary.items():
        lines.append(f"{method:<16}" + "".join(f"{format_cell(cells[m]):>24}"
                                               for m in METRICS))
    return "\n".join(lines)
