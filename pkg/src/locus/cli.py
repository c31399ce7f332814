"""Command-line interface: calibrate, score, flag, tune, certify, benchmark, synth, inspect.

Exit codes: 0 success, 1 validation/contract error, 2 runtime failure, 3 EMPTY rule.
Errors print a single line ``ERROR <stage>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path


from ._validation import ValidationError
from .artifact import Artifact
from .benchmark import run_benchmark
from .config import RunConfig, parse_override
from .dataset import generate_synthetic, read_feature_csv, write_csv
from .flagging import (certify_lambda, default_lambda_grid, default_rule, tune_alpha,
                       tune_lambda)
from .pipeline import fit_pipeline

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_EMPTY = 0, 1, 2, 3
SCORE_HEADER = ("row", "U_alpha", "gamma", "accept")


class StageError(Exception):
    def __init__(self, stage, message, code):
        super().__init__(message)
        self.stage, self.code = stage, code


class _Stage:
    """Context manager tagging exceptions with the pipeline stage that raised them."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, StageError):
            return False
        code = EXIT_INVALID if isinstance(exc, (ValidationError, FileNotFoundError,
                                                KeyError)) else EXIT_RUNTIME
        raise StageError(self.name, str(exc).replace("\n", " "), code) from exc


def _load_config(args):
    with _Stage("config"):
        overrides = dict(parse_override(o) for o in args.set or [])
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        if getattr(args, "seeds", None):
            overrides["seeds"] = [int(s) for s in args.seeds.split(",")]
        return RunConfig.load(args.config, overrides)


def _emit(path, text):
    if path:
        Path(path).write_text(text)


def cmd_calibrate(args):
    config = _load_config(args)
    with _Stage("calibrate"):
        pipe = fit_pipeline(config)
    with _Stage("artifact"):
        art = Artifact.from_pipeline(pipe, config)
        art.save(args.out)
    print(f"n1={len(pipe.splits.cal_d1)} n2={pipe.scorer.n2_} "
          f"t={pipe.scorer.t_:.6f} tau={pipe.tau * pipe.loss_scale():.6g}")
    return EXIT_OK


def _read_features(art, path):
    with _Stage("input"):
        header, matrix = read_feature_csv(path)
        extra = [h for h in header if h not in art.feature_columns]
        if extra:
            raise ValidationError(f"unexpected column(s) {extra}")
        missing = [c for c in art.feature_columns if c not in header]
        if missing:
            raise ValidationError(f"missing column(s) {missing}")
        return matrix[:, [header.index(c) for c in art.feature_columns]]


def _read_labelled(art, path):
    with _Stage("input"):
        header, matrix = read_feature_csv(path)
        if art.target_column not in header:
            raise ValidationError(f"target column {art.target_column!r} missing")
        missing = [c for c in art.feature_columns if c not in header]
        if missing:
            raise ValidationError(f"missing column(s) {missing}")
        X = matrix[:, [header.index(c) for c in art.feature_columns]]
        return X, matrix[:, header.index(art.target_column)]


def _load_artifact(path):
    with _Stage("artifact"):
        return Artifact.load(path)


def cmd_score(args):
    art = _load_artifact(args.artifact)
    X = _read_features(art, args.input)
    with _Stage("score"):
        U = art.score_raw(X)
        gamma = art.gamma_used(X)
        accept = art.accept(X)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(SCORE_HEADER)
        for i, u in enumerate(U):
            writer.writerow([i, repr(float(u)),
                             "" if gamma is None else repr(float(gamma[i])),
                             "" if accept is None else int(accept[i])])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _finish_rule(art, rule, report, args):
    art.rule = rule
    with _Stage("artifact"):
        art.save(args.out or args.artifact)
    if report is not None:
        print(report.to_text())
        _emit(args.report, report.to_json())
    if rule.is_empty:
        print("EMPTY rule: every input will be flagged", file=sys.stderr)
        return EXIT_EMPTY
    print(f"lambda={rule.lam * art.loss_scale():.6g} alpha={rule.alpha} "
          f"provenance={rule.provenance}")
    return EXIT_OK


def _validation_scores(art, args):
    X, y = _read_labelled(art, args.validation)
    with _Stage("score"):
        z = art.validation_losses(X, y)
        return X, z, art.scorer.predict(art.standardize(X))


def cmd_flag(args):
    art = _load_artifact(args.artifact)
    if args.method == "default-tau":
        return _finish_rule(art, default_rule(art.scorer, art.tau), None, args)
    if not args.validation:
        raise StageError("flag", f"method {args.method} needs --validation", EXIT_INVALID)
    if args.method == "tuned-lambda":
        return cmd_tune(args, art)
    if args.method == "tuned-alpha":
        return cmd_tune(args, art, tune="alpha")
    return cmd_certify(args, art)


def cmd_tune(args, art=None, tune=None):
    art = art or _load_artifact(args.artifact)
    tune = tune or args.tune
    X, z, u = _validation_scores(art, args)
    with _Stage("tune"):
        if tune == "alpha":
            rule, report = tune_alpha(art.scorer, art.standardize(X), z, art.tau,
                                      eta=args.eta, rho_min=args.rho_min)
        else:
            grid = default_lambda_grid(u, args.grid_size)
            rule, report = tune_lambda(u, z > art.tau, grid, args.eta, args.rho_min,
                                       alpha=art.scorer.alpha)
    return _finish_rule(art, rule, report, args)


def cmd_certify(args, art=None):
    art = art or _load_artifact(args.artifact)
    _, z, u = _validation_scores(art, args)
    with _Stage("certify"):
        grid = default_lambda_grid(u, args.grid_size)
        rule, report = certify_lambda(u, z > art.tau, grid, args.eta, args.delta,
                                      alpha=art.scorer.alpha)
    return _finish_rule(art, rule, report, args)


def cmd_benchmark(args):
    config = _load_config(args)
    with _Stage("benchmark"):
        result = run_benchmark(config)
    table = result.table()
    print(table)
    if result.failures:
        print(f"{len(result.failures)} seed(s) failed", file=sys.stderr)
    _emit(args.out, result.to_json())
    _emit(args.table, table + "\n")
    return EXIT_OK


def cmd_synth(args):
    config = _load_config(args)
    with _Stage("synth"):
        spec = config.synthetic_spec(config.seed)
        if args.n is not None:
            spec = spec.replace(n_samples=args.n)
        data, _ = generate_synthetic(spec)
        write_csv(data, args.out, config.target_column)
    print(f"wrote {len(data)} rows to {args.out}")
    return EXIT_OK


def cmd_inspect(args):
    art = _load_artifact(args.artifact)
    s = art.scorer
    info = {
        "schema_version": 1,
        "features": art.feature_columns, "target": art.target_column,
        "predictor": art.predictor.to_dict()["kind"], "loss": art.loss,
        "engine": s.engine, "aggregation": s.aggregation,
        "gamma": s.gamma if s.aggregation == "envelope" else None,
        "alpha": s.alpha, "t": s.t_, "n2": s.n2_,
        "tau": art.tau * art.loss_scale(),
        "rule": None if art.rule is None else {
            "lambda": None if art.rule.is_empty else art.rule.lam * art.loss_scale(),
            "alpha": art.rule.alpha, "provenance": art.rule.provenance},
        "config_hash": art.config_hash,
        "probes_reproduce": bool(art.check_probes()),
    }
    print(json.dumps(info, indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="locus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a configuration field (repeatable)")
        p.add_argument("--seed", type=int)

    def rule_args(p, eta=True):
        p.add_argument("artifact")
        p.add_argument("--validation", help="labelled CSV")
        p.add_argument("--out", help="write the updated artifact here (default: in place)")
        p.add_argument("--report", help="write the tuning report as JSON")
        p.add_argument("--grid-size", type=int, default=50)
        if eta:
            p.add_argument("--eta", type=float, default=0.1)
            p.add_argument("--rho-min", type=float, default=0.05)
            p.add_argument("--delta", type=float, default=0.1)

    p = sub.add_parser("calibrate", help="fit and calibrate, write an artifact")
    config_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("score", help="score a feature CSV with an artifact")
    p.add_argument("artifact")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("flag", help="attach a flag rule to an artifact")
    rule_args(p)
    p.add_argument("--method", default="default-tau",
                   choices=["default-tau", "tuned-lambda", "tuned-alpha", "certified"])
    p.set_defaults(func=cmd_flag)

    p = sub.add_parser("tune", help="tune lambda or alpha on labelled validation data")
    rule_args(p)
    p.add_argument("--tune", choices=["lambda", "alpha"], default="lambda")
    p.set_defaults(func=lambda a: cmd_tune(a))

    p = sub.add_parser("certify", help="certified distribution-free lambda")
    rule_args(p)
    p.set_defaults(func=lambda a: cmd_certify(a))

    p = sub.add_parser("benchmark", help="repeated-seed benchmark")
    config_args(p)
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--out", help="results JSON path")
    p.add_argument("--table", help="plain-text table path")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("synth", help="write a synthetic dataset to CSV")
    config_args(p)
    p.add_argument("--n", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="summarize an artifact")
    p.add_argument("artifact")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"ERROR {exc.stage}: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ValueError) as exc:
        print(f"ERROR {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc, ValueError) else EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
