"""Run configuration: defaults, field-level validation and a stable semantic hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ._validation import ValidationError
from .dataset import SyntheticSpec
from .engines import ENGINES
from .flagging import DEFAULT_ALPHA_GRID
from .predictors import LOSSES

METHODS = ("locus", "locus_gamma", "locus_tuned", "locus_alpha", "locus_certified",
           "locus_matched", "label_variance", "iflag")
FLAG_METHODS = ("default_tau", "tuned_lambda", "tuned_alpha", "certified")


class ConfigError(ValidationError):
    def __init__(self, field_name, message):
        super().__init__(f"field {field_name!r}: {message}")
        self.field = field_name


def _default_synthetic():
    return SyntheticSpec(n_samples=4000).to_dict()


@dataclass(frozen=True)
class RunConfig:
    """Everything a calibrate or benchmark run needs; every field has a default."""

    data_source: str = "synthetic"
    csv_path: str | None = None
    target_column: str = "y"
    synthetic: dict = field(default_factory=_default_synthetic)
    fractions: tuple = (0.4, 0.4, 0.1, 0.1)
    cal_d1_fraction: float = 0.5
    seed: int = 0
    predictor: str = "linear_ols"
    predictor_params: dict = field(default_factory=dict)
    loss: str = "absolute"
    engine: str = "bootstrap_gaussian_ensemble"
    engine_params: dict = field(default_factory=dict)
    aggregation: str = "mean"
    gamma: float | str = "scarcity"
    scarcity_params: dict = field(default_factory=dict)
    alpha: float = 0.1
    tau: float | None = None
    tau_level: float = 0.7
    flag_method: str = "default_tau"
    eta: float = 0.1
    delta: float = 0.1
    rho_min: float = 0.05
    lambda_grid_size: int = 50
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    seeds: tuple = tuple(range(30))
    methods: tuple = METHODS
    target_acceptance: float = 0.7
    baseline_k_local: int = 50
    iflag_trees: int = 100
    iflag_subsample: int = 256
    n_jobs: int = 1

    def __post_init__(self):
        for name in ("fractions", "alpha_grid", "seeds", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        def unit(name, lo_open=True, hi_open=True):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(name, f"expected a number, got {v!r}")
            if (v <= 0 if lo_open else v < 0) or (v >= 1 if hi_open else v > 1):
                raise ConfigError(name, f"{v} outside {'(' if lo_open else '['}0, 1"
                                        f"{')' if hi_open else ']'}")

        if self.data_source not in ("synthetic", "csv"):
            raise ConfigError("data_source", "must be 'synthetic' or 'csv'")
        if self.data_source == "csv" and not self.csv_path:
            raise ConfigError("csv_path", "required when data_source is 'csv'")
        try:
            SyntheticSpec.from_dict(self.synthetic)
        except (TypeError, ValidationError) as exc:
            raise ConfigError("synthetic", str(exc)) from None
        if len(self.fractions) != 4 or any(f <= 0 for f in self.fractions) \
                or abs(sum(self.fractions) - 1) > 1e-12:
            raise ConfigError("fractions", "need four positive reals summing to 1")
        unit("cal_d1_fraction")
        if self.predictor not in ("linear_ols", "knn_regressor"):
            raise ConfigError("predictor", f"unknown kind {self.predictor!r}")
        if self.loss not in LOSSES:
            raise ConfigError("loss", f"must be one of {LOSSES}")
        if self.engine not in ENGINES:
            raise ConfigError("engine", f"must be one of {sorted(ENGINES)}")
        if self.aggregation not in ("mean", "envelope"):
            raise ConfigError("aggregation", "must be 'mean' or 'envelope'")
        if self.gamma != "scarcity":
            unit("gamma", hi_open=False)
        for name in ("alpha", "tau_level", "eta", "delta", "target_acceptance"):
            unit(name)
        unit("rho_min", lo_open=False)
        if self.flag_method not in FLAG_METHODS:
            raise ConfigError("flag_method", f"must be one of {FLAG_METHODS}")
        for a in self.alpha_grid:
            if not 0 < a < 1:
                raise ConfigError("alpha_grid", f"entry {a} outside (0, 1)")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError("methods", f"unknown method(s) {sorted(unknown)}")
        if not self.seeds:
            raise ConfigError("seeds", "need at least one seed")
        for name in ("lambda_grid_size", "baseline_k_local", "iflag_trees", "iflag_subsample"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(name, "must be a positive integer")

    def synthetic_spec(self, seed=None):
        spec = SyntheticSpec.from_dict(self.synthetic)
        return spec if seed is None else spec.replace(seed=seed)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("?", str(exc)) from None

    @classmethod
    def load(cls, path, overrides=None):
        try:
            d = json.loads(Path(path).read_text()) if path else {}
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        d.update(overrides or {})
        return cls.from_dict(d)

    def with_overrides(self, **changes):
        return replace(self, **changes)

    def hash(self):
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def parse_override(text):
    """``key=value`` with value parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
