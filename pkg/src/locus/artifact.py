"""Versioned JSON artifact holding a calibrated pipeline and its probe outputs."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ValidationError, check_matrix
from .calibration import LossQuantileScorer
from .dataset import Standardizer
from .flagging import FlagRule
from .predictors import loss_values, predictor_from_dict

SCHEMA_VERSION = 1
N_PROBES = 16


@dataclass
class Artifact:
    """Calibrated pipeline state. Internal quantities are in standardized units."""

    standardizer: Standardizer
    predictor: object
    loss: str
    tau: float
    scorer: LossQuantileScorer
    feature_columns: list
    target_column: str
    config: dict
    config_hash: str
    rule: FlagRule | None = None
    probes: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_pipeline(cls, pipe, config):
        art = cls(pipe.standardizer, pipe.predictor, pipe.loss, pipe.tau, pipe.scorer,
                  list(pipe.splits.train.column_names), config.target_column,
                  config.to_dict(), config.hash(),
                  provenance={"seed": config.seed,
                              "created": time.strftime("%Y-%m-%dT%H:%M:%S")})
        probe_X = art.standardizer.inverse_transform(pipe.splits.test.features[:N_PROBES])
        art.probes = {"X": probe_X.tolist(), "U_alpha": art.score_raw(probe_X).tolist()}
        return art

    # scoring in original units -------------------------------------------------------

    def standardize(self, X_raw):
        return self.standardizer.transform(X_raw)

    def loss_scale(self):
        return self.standardizer.loss_scale(self.loss)

    def score_std(self, X_raw):
        X_raw = check_matrix(X_raw)
        if X_raw.shape[0] == 0:
            return np.empty(0)
        return self.scorer.predict(self.standardize(X_raw))

    def score_raw(self, X_raw):
        return self.score_std(X_raw) * self.loss_scale()

    def gamma_used(self, X_raw):
        X_raw = check_matrix(X_raw)
        if X_raw.shape[0] == 0:
            return None
        return self.scorer.gamma_for(self.standardize(X_raw))

    def accept(self, X_raw):
        return None if self.rule is None else self.rule.accept(self.score_std(X_raw))

    def validation_losses(self, X_raw, y_raw):
        """Standardized losses of the frozen predictor on labelled raw data."""
        pred = self.predictor.predict(self.standardize(X_raw))
        return loss_values(pred, self.standardizer.transform_target(y_raw), self.loss)

    def check_probes(self):
        X = np.asarray(self.probes["X"], dtype=float)
        return np.array_equal(self.score_raw(X), np.asarray(self.probes["U_alpha"]))

    # persistence ---------------------------------------------------------------------

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "feature_columns": self.feature_columns,
            "target_column": self.target_column,
            "standardizer": self.standardizer.to_dict(),
            "predictor": self.predictor.to_dict(),
            "loss": self.loss,
            "tau": self.tau,
            "calibration": self.scorer.to_dict(),
            "flag_rule": None if self.rule is None else self.rule.to_dict(),
            "config": self.config,
            "config_hash": self.config_hash,
            "probes": self.probes,
            "provenance": self.provenance,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValidationError(
                f"unsupported artifact schema_version {version!r} (expected {SCHEMA_VERSION})")
        rule = d.get("flag_rule")
        return cls(
            standardizer=Standardizer.from_dict(d["standardizer"]),
            predictor=predictor_from_dict(d["predictor"]),
            loss=d["loss"], tau=float(d["tau"]),
            scorer=LossQuantileScorer.from_dict(d["calibration"]),
            feature_columns=list(d["feature_columns"]), target_column=d["target_column"],
            config=d["config"], config_hash=d["config_hash"],
            rule=None if rule is None else FlagRule.from_dict(rule),
            probes=d["probes"], provenance=d.get("provenance", {}))

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"artifact is not valid JSON: {exc}") from None
        return cls.from_dict(d)
