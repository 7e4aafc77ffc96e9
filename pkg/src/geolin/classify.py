"""Linearizability verdicts from sampled curvature diagnostics.

The authoritative test is conformal flatness of the lifted metric (Cotton in
three dimensions, Weyl from four on); constant curvature of the Jacobi metric
is collected as supporting evidence. Both Jacobi conventions are tried: the
canonical one through the plain lift g + dz^2/V (conformal to V g + dz^2) and
the inverse one through g/V + dz^2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .curvature import (
    MetricField, SingularMetricError, constant_curvature_residual, cotton_york, curvature, weyl,
)
from .exprjet import ExprDomainError, parse
from .systems import (
    CANONICAL, CONVENTIONS, INVERSE, SystemSpec, eisenhart_lift, jacobi_eisenhart_lift,
    jacobi_metric, sample_points,
)

LINEARIZABLE = "LINEARIZABLE"
NOT_LINEARIZABLE = "NOT_LINEARIZABLE"
INDETERMINATE = "INDETERMINATE"

PASS, FAIL, GRAY = "pass", "fail", "gray"


@dataclass(frozen=True)
class Thresholds:
    passing: float = 1e-8
    failing: float = 1e-4
    k_spread: float = 1e-6
    k_zero: float = 1e-10

    def to_json(self) -> dict:
        return {"pass": self.passing, "fail": self.failing, "k_spread": self.k_spread,
                "k_zero": self.k_zero}

    def grade(self, value: float) -> str:
        if value < self.passing:
            return PASS
        if value > self.failing:
            return FAIL
        return GRAY


DEFAULT_THRESHOLDS = Thresholds()


class ClassificationError(RuntimeError):
    def __init__(self, message: str, point=None):
        self.point = point
        super().__init__(message if point is None else f"{message} at point {tuple(point)}")


def _curv(m: MetricField, p):
    try:
        return curvature(m, p)
    except (ExprDomainError, SingularMetricError) as exc:
        raise ClassificationError(f"{m.name or 'metric'}: {exc}", p) from exc


@dataclass
class MaxSymReport:
    K: list[float]
    residuals: list[float]
    outcome: str

    @property
    def K_mean(self) -> float:
        return float(np.mean(self.K))

    @property
    def K_std(self) -> float:
        return float(np.std(self.K))

    @property
    def residual_max(self) -> float:
        return float(np.max(self.residuals))

    @property
    def spread(self) -> float:
        return self.K_std / (abs(self.K_mean) + 1e-12)

    def to_json(self) -> dict:
        return {"K_mean": self.K_mean, "K_std": self.K_std, "residual_max": self.residual_max}


def maximal_symmetry_test(m: MetricField, points: Sequence[Sequence[float]],
                          thresholds: Thresholds = DEFAULT_THRESHOLDS) -> MaxSymReport:
    """Pointwise isotropy residual plus constancy of K across the sample."""
    if m.dim < 2:
        raise ValueError("maximal symmetry test needs dimension >= 2")
    ks, res = [], []
    for p in points:
        k, r = constant_curvature_residual(_curv(m, p))
        ks.append(k)
        res.append(r)
    rep = MaxSymReport(ks, res, PASS)
    flat = all(abs(k) < thresholds.k_zero for k in ks)
    iso = thresholds.grade(rep.residual_max)
    if flat:
        const = PASS
    elif rep.spread < thresholds.k_spread:
        const = PASS
    elif rep.spread > thresholds.failing:
        const = FAIL
    else:
        const = GRAY
    rep.outcome = FAIL if FAIL in (iso, const) else GRAY if GRAY in (iso, const) else PASS
    return rep


@dataclass
class ConformalReport:
    kind: str
    residuals: list[float]
    outcome: str

    @property
    def residual_max(self) -> float:
        return float(np.max(self.residuals)) if self.residuals else 0.0

    def to_json(self) -> dict:
        return {"kind": self.kind, "residual_max": self.residual_max}


def conformal_flatness_test(m: MetricField, points: Sequence[Sequence[float]],
                            thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ConformalReport:
    """Dimension <= 2 passes outright; 3 uses Cotton-York, >= 4 uses Weyl."""
    n = m.dim
    if n <= 2:
        return ConformalReport("dim<=2", [], PASS)
    test, kind = (cotton_york, "cotton") if n == 3 else (weyl, "weyl")
    res = [test(_curv(m, p))[1] for p in points]
    return ConformalReport(kind, res, thresholds.grade(max(res)))


@dataclass
class Verdict:
    system: str
    n: int
    decision: str
    max_sym: MaxSymReport | None
    per_convention: dict[str, dict]
    conformal: ConformalReport
    seed: int
    points: int
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    decided_by: str | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    @property
    def implied_noether_count(self) -> int | None:
        return self.n * (self.n + 1) // 2 if self.decision == LINEARIZABLE else None

    def to_json(self) -> dict:
        return {
            "system": self.system,
            "n": self.n,
            "decision": self.decision,
            "evidence": {
                "max_sym": self.max_sym.to_json() if self.max_sym else None,
                "per_convention": self.per_convention,
                "conformal": {**self.conformal.to_json(), "convention": self.decided_by},
                "implied_noether_count": self.implied_noether_count,
            },
            "seed": self.seed,
            "points": self.points,
            "thresholds": self.thresholds.to_json(),
            "parameters": dict(self.params),
        }

    def dumps(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json(), indent=indent)


def default_lifts(s: SystemSpec, fiber: str = "z") -> dict[str, MetricField]:
    return {CANONICAL: eisenhart_lift(s, fiber), INVERSE: jacobi_eisenhart_lift(s, INVERSE, fiber)}


def classify(s: SystemSpec, samples: int = 50, seed: int = 0,
             thresholds: Thresholds = DEFAULT_THRESHOLDS,
             lifts: Mapping[str, MetricField] | None = None) -> Verdict:
    """Linearizability verdict for `s` from `samples` deterministic points.

    `lifts` replaces the lifted metric tested for a convention; any conformal
    rescaling of the default must give the same decision.
    """
    base = sample_points(s, samples, seed)
    if s.dim == 1:
        return Verdict(s.name, 1, LINEARIZABLE, None, {}, ConformalReport("dim<=2", [], PASS),
                       seed, len(base), thresholds, None, dict(s.params))

    chosen = {**default_lifts(s), **(lifts or {})}
    lifted_points = [tuple(p) + (0.0,) for p in base]
    per: dict[str, dict] = {}
    reports: dict[str, tuple[ConformalReport, MaxSymReport]] = {}
    for conv in CONVENTIONS:
        conf = conformal_flatness_test(chosen[conv], lifted_points, thresholds)
        ms = maximal_symmetry_test(jacobi_metric(s, conv), base, thresholds)
        reports[conv] = (conf, ms)
        per[conv] = {"conformal": conf.to_json(), "conformal_outcome": conf.outcome,
                     "max_sym": {**ms.to_json(), "K_spread": ms.spread}, "max_sym_outcome": ms.outcome}

    outcomes = [reports[c][0].outcome for c in CONVENTIONS]
    if PASS in outcomes:
        decision, by = LINEARIZABLE, CONVENTIONS[outcomes.index(PASS)]
    elif all(o == FAIL for o in outcomes):
        decision = NOT_LINEARIZABLE
        by = min(CONVENTIONS, key=lambda c: reports[c][0].residual_max)
    else:
        decision, by = INDETERMINATE, CONVENTIONS[outcomes.index(GRAY)]
    conf, ms = reports[by]
    return Verdict(s.name, s.dim, decision, ms, per, conf, seed, len(base), thresholds, by,
                   dict(s.params))


def radial_oscillator_system(n: int, kappa: float = 1.0) -> SystemSpec:
    """Euclidean kinetic term with V = -(1 + k/4 r^2)^2 in n dimensions."""
    if n < 2:
        raise ValueError("radial oscillator needs n >= 2")
    coords = ("x", "y") if n == 2 else tuple(f"x{i + 1}" for i in range(n))
    r2 = " + ".join(f"{c}^2" for c in coords)
    domain = {c: (-1.0, 1.0) for c in coords}
    name = "oscillator-corrections" if n == 2 else f"corollary3-n{n}"
    metric = MetricField.diagonal(coords, ["1"] * n, {"k": float(kappa)}, domain=domain, name=name)
    return SystemSpec(name, metric, parse(f"-(1 + k/4*({r2}))^2"), domain)
