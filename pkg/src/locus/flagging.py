"""Acceptance rules on U_alpha(x): default lambda = tau, tuned lambda, tuned alpha, certified."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import ValidationError, check_open_unit, check_vector

PROVENANCES = ("default_tau", "tuned_lambda", "tuned_alpha", "certified")
DEFAULT_ALPHA_GRID = tuple(round(0.02 * i, 2) for i in range(1, 16))


@dataclass(frozen=True)
class FlagRule:
    """accept(x) iff U_alpha(x) <= lam; ``lam=None`` is the EMPTY rule (reject all)."""

    lam: float | None
    alpha: float
    provenance: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")

    @property
    def is_empty(self):
        return self.lam is None

    def accept(self, scores):
        scores = np.asarray(scores, dtype=float)
        if self.is_empty:
            return np.zeros(scores.shape, dtype=bool)
        return scores <= self.lam

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TuneReport:
    """One row per candidate; ``value`` is q-hat (tuners) or the certified upper ratio."""

    candidate_name: str
    rows: list
    chosen: float | None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)

    def to_text(self):
        value_name = "q_bar" if "eps_H" in self.extras else "q_hat"
        lines = [f"{self.candidate_name:>12} {'n':>7} {'accept%':>8} {value_name:>8} feasible"]
        for r in self.rows:
            value = "--" if r["value"] is None else f"{r['value']:.4f}"
            lines.append(f"{r['candidate']:>12.6g} {r['n_accepted']:>7d} "
                         f"{100 * r['accept_fraction']:>8.1f} {value:>8} "
                         f"{'yes' if r['feasible'] else 'no'}")
        lines.append(f"chosen: {'EMPTY' if self.chosen is None else f'{self.chosen:.6g}'}")
        for key, val in self.extras.items():
            lines.append(f"{key}: {val:.6g}")
        return "\n".join(lines)


def accept(scorer, lam, X):
    """Boolean acceptance of each row of X under threshold lam (None rejects all)."""
    scores = scorer.predict(X)
    return np.zeros(len(scores), dtype=bool) if lam is None else scores <= lam


def default_rule(scorer, tau):
    return FlagRule(float(tau), float(scorer.alpha), "default_tau", {"tau": float(tau)})


def default_lambda_grid(scores, size=50):
    scores = np.asarray(scores, dtype=float)
    finite = scores[np.isfinite(scores)]
    if finite.size == 0:
        return np.array([np.inf])
    return np.linspace(finite.min(), finite.max(), size)


def _exceed_table(u, exceed, grid):
    accepted = u[None, :] <= np.asarray(grid, dtype=float)[:, None]
    n_acc = accepted.sum(axis=1)
    n_bad = (accepted & exceed[None, :]).sum(axis=1)
    return n_acc, n_bad


def _argmin_largest(candidates, distance, feasible):
    best = None
    for c, d, ok in zip(candidates, distance, feasible):
        if ok and (best is None or d < best[1] or (d == best[1] and c > best[0])):
            best = (c, d)
    return None if best is None else best[0]


def tune_lambda(u, exceed, grid=None, eta=0.1, rho_min=0.05, alpha=None):
    """argmin over the grid of |q_hat(lam) - eta| subject to n_lam / N >= rho_min.

    Ties go to the largest lam. Returns ``(FlagRule, TuneReport)``; the rule is EMPTY
    when no candidate meets the acceptance constraint.
    """
    u = np.asarray(u, dtype=float).ravel()
    exceed = np.asarray(exceed, dtype=bool).ravel()
    if u.size == 0 or u.size != exceed.size:
        raise ValidationError("scores and exceedance flags must be nonempty and aligned")
    check_open_unit(eta, "eta")
    if not 0.0 <= rho_min < 1.0:
        raise ValidationError(f"rho_min must lie in [0, 1), got {rho_min}")
    grid = default_lambda_grid(u) if grid is None else check_vector(grid, "grid")
    N = u.size
    n_acc, n_bad = _exceed_table(u, exceed, grid)
    q_hat = n_bad / np.maximum(n_acc, 1)
    feasible = n_acc / N >= rho_min
    chosen = _argmin_largest(grid, np.abs(q_hat - eta), feasible)
    rows = [{"candidate": float(c), "n_accepted": int(n), "accept_fraction": n / N,
             "value": float(q), "feasible": bool(f)}
            for c, n, q, f in zip(grid, n_acc, q_hat, feasible)]
    meta = {"eta": eta, "rho_min": rho_min, "grid": [float(g) for g in grid]}
    rule = FlagRule(None if chosen is None else float(chosen),
                    float("nan") if alpha is None else float(alpha), "tuned_lambda", meta)
    return rule, TuneReport("lambda", rows, rule.lam)


def tune_alpha(scorer, X_val, z_val, tau, grid=DEFAULT_ALPHA_GRID, eta=0.1, rho_min=0.05):
    """Tune the calibration level with lam fixed at tau, reusing the stored PIT values.

    Ties go to the largest alpha. The returned rule carries lam = tau and the chosen
    alpha; use ``scorer.with_alpha(rule.alpha)`` to score with it.
    """
    z_val = check_vector(z_val, "z_val")
    check_open_unit(eta, "eta")
    grid = [check_open_unit(a, "alpha candidate") for a in grid]
    if not grid:
        raise ValidationError("alpha grid must be nonempty")
    exceed = z_val > tau
    N = z_val.size
    rows = []
    for a in grid:
        accepted = scorer.with_alpha(a).predict(X_val) <= tau
        n = int(accepted.sum())
        q = float((accepted & exceed).sum() / max(n, 1))
        rows.append({"candidate": a, "n_accepted": n, "accept_fraction": n / N,
                     "value": q, "feasible": n / N >= rho_min})
    chosen = _argmin_largest(grid, [abs(r["value"] - eta) for r in rows],
                             [r["feasible"] for r in rows])
    meta = {"eta": eta, "rho_min": rho_min, "grid": list(grid), "tau": float(tau)}
    rule = FlagRule(None if chosen is None else float(tau),
                    float("nan") if chosen is None else float(chosen), "tuned_alpha", meta)
    return rule, TuneReport("alpha", rows, chosen)


def certificate_epsilons(N, delta):
    """Uniform deviation radii (eps_H, eps_G) for the numerator and denominator."""
    if N < 1:
        raise ValidationError("N must be at least 1")
    check_open_unit(delta, "delta")
    eps_g = math.sqrt(math.log(4.0 / delta) / (2.0 * N))
    eps_h = 2.0 * math.sqrt(math.log(2.0 * (N + 1)) / N) + eps_g
    return eps_h, eps_g


def certify_lambda(u, exceed, grid=None, eta=0.1, delta=0.1, alpha=None):
    """Largest grid lam whose upper ratio (H + eps_H) / (G - eps_G) is at most eta.

    Candidates need G_hat > eps_G. With probability at least 1 - delta the conditional
    exceedance among accepted inputs is at most eta; no feasible lam gives EMPTY.
    """
    u = np.asarray(u, dtype=float).ravel()
    exceed = np.asarray(exceed, dtype=bool).ravel()
    if u.size == 0 or u.size != exceed.size:
        raise ValidationError("scores and exceedance flags must be nonempty and aligned")
    check_open_unit(eta, "eta")
    grid = default_lambda_grid(u) if grid is None else check_vector(grid, "grid")
    N = u.size
    eps_h, eps_g = certificate_epsilons(N, delta)
    n_acc, n_bad = _exceed_table(u, exceed, grid)
    G, H = n_acc / N, n_bad / N
    positive = G > eps_g
    q_bar = np.where(positive, (H + eps_h) / np.where(positive, G - eps_g, 1.0), np.inf)
    feasible = positive & (q_bar <= eta)
    chosen = float(np.max(grid[feasible])) if feasible.any() else None
    rows = [{"candidate": float(c), "n_accepted": int(n), "accept_fraction": float(g),
             "G_hat": float(g), "H_hat": float(h),
             "value": float(q) if p else None, "feasible": bool(f)}
            for c, n, g, h, q, p, f in zip(grid, n_acc, G, H, q_bar, positive, feasible)]
    meta = {"eta": eta, "delta": delta, "eps_H": eps_h, "eps_G": eps_g,
            "grid": [float(g) for g in grid]}
    rule = FlagRule(chosen, float("nan") if alpha is None else float(alpha), "certified", meta)
    return rule, TuneReport("lambda", rows, chosen, {"eps_H": eps_h, "eps_G": eps_g})
