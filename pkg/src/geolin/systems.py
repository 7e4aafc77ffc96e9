"""Constraint Hamiltonian systems and their geometrisations.

A system is the Lagrangian (1/2N) g_ij qdot^i qdot^j - N V(q) with the lapse
fixed to N = 1 for dynamics. The energy constant h is an ordinary parameter
already folded into V.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .curvature import MetricField, check_invertible, SingularMetricError
from .exprjet import (
    Const, Expr, ExprDomainError, ExprSyntaxError, add, as_expr, div, eval_scalar, mul, neg,
    sub, to_string, validate_symbols,
)

CANONICAL = "canonical"
INVERSE = "inverse"
CONVENTIONS = (CANONICAL, INVERSE)
TARGETS = ("jacobi-canonical", "jacobi-inverse", "lift")
GUARD_TOL = 1e-10
DEFAULT_FIBER = "z"
FIBER_RANGE = (-1.0, 1.0)


class SpecError(ValueError):
    """Schema or content problem in a system document; `errors` holds (path, message)."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Transform:
    name: str
    target: str
    maps: Mapping[str, Expr]

    def __call__(self, env: Mapping[str, float]) -> np.ndarray:
        return np.array([eval_scalar(e, env) for e in self.maps.values()])

    @property
    def new_coords(self) -> tuple[str, ...]:
        return tuple(self.maps)


@dataclass(frozen=True, eq=False)
class Generator:
    name: str
    xi: Expr
    eta: Mapping[str, Expr]
    boundary: Expr = Const(0.0)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    name: str
    metric: MetricField
    potential: Expr
    domain: Mapping[str, tuple[float, float]]
    guards: tuple[Expr, ...] = ()
    transforms: tuple[Transform, ...] = ()
    generators: tuple[Generator, ...] = ()
    gauge: str = "N=1"

    @property
    def coords(self) -> tuple[str, ...]:
        return self.metric.coords

    @property
    def params(self) -> Mapping[str, float]:
        return self.metric.params

    @property
    def dim(self) -> int:
        return self.metric.dim

    def env(self, point: Sequence[float]) -> dict[str, float]:
        return {**self.params, **dict(zip(self.coords, map(float, point)))}

    def V(self, point: Sequence[float]) -> float:
        return eval_scalar(self.potential, self.env(point))

    def with_params(self, **values) -> "SystemSpec":
        unknown = set(values) - set(self.params)
        if unknown:
            raise KeyError(f"unknown parameter(s) {sorted(unknown)} for {self.name}")
        return replace(self, metric=self.metric.with_params(**values))

    def all_guards(self) -> tuple[Expr, ...]:
        return tuple(self.guards) + (self.potential,)

    def transform(self, name: str) -> Transform:
        for t in self.transforms:
            if t.name == name:
                return t
        raise KeyError(name)


# ---------------------------------------------------------------------------
# load / serialize
# ---------------------------------------------------------------------------


def _parse_at(text, path: str, allowed: set[str], errors: list) -> Expr | None:
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        errors.append((path, "expected an expression string"))
        return None
    try:
        e = as_expr(text)
    except ExprSyntaxError as exc:
        errors.append((path, f"parse error: {exc}"))
        return None
    unknown = validate_symbols(e, allowed)
    if unknown:
        errors.append((path, f"unknown symbol(s) {unknown}"))
    return e


def load(doc: Mapping | str) -> SystemSpec:
    """Build a SystemSpec from its JSON document (dict or JSON text)."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    errors: list[tuple[str, str]] = []
    if not isinstance(doc, Mapping):
        raise SpecError([("$", "document must be an object")])
    for key, typ in (("name", str), ("coordinates", list), ("metric", list),
                     ("potential", (str, int, float)), ("domain", Mapping)):
        if key not in doc:
            errors.append((f"$.{key}", "missing required field"))
        elif not isinstance(doc[key], typ):
            errors.append((f"$.{key}", "wrong type"))
    params = doc.get("parameters", {})
    if not isinstance(params, Mapping) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in params.values()):
        errors.append(("$.parameters", "must map names to numbers"))
        params = {}
    if errors:
        raise SpecError(errors)

    coords = list(doc["coordinates"])
    if not coords or not all(isinstance(c, str) and c for c in coords) or len(set(coords)) != len(coords):
        errors.append(("$.coordinates", "must be a nonempty list of distinct names"))
    if set(coords) & set(params):
        errors.append(("$.parameters", "parameter names collide with coordinates"))
    if "N" in coords or "N" in params:
        errors.append(("$", "the lapse N is a gauge variable and may not appear"))
    n = len(coords)
    allowed = set(coords) | set(params)

    rows = doc["metric"]
    comps: list[list[Expr | None]] = []
    if len(rows) != n or not all(isinstance(r, list) and len(r) == n for r in rows):
        errors.append(("$.metric", f"must be a {n}x{n} matrix"))
    else:
        for i, row in enumerate(rows):
            comps.append([_parse_at(cell, f"$.metric[{i}][{j}]", allowed, errors)
                          for j, cell in enumerate(row)])
        for i in range(n):
            for j in range(i + 1, n):
                a, b = comps[i][j], comps[j][i]
                if a is not None and b is not None and a != b:
                    errors.append((f"$.metric[{j}][{i}]",
                                   f"metric not symmetric at ({coords[i]},{coords[j]})"))

    potential = _parse_at(doc["potential"], "$.potential", allowed, errors)

    domain = {}
    for c in coords:
        box = doc["domain"].get(c)
        ok = (isinstance(box, list) and len(box) == 2
              and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in box))
        if not ok or not box[0] < box[1]:
            errors.append((f"$.domain.{c}", "must be [lo, hi] with lo < hi"))
        else:
            domain[c] = (float(box[0]), float(box[1]))

    guards = tuple(_parse_at(g, f"$.guards[{k}]", allowed, errors)
                   for k, g in enumerate(doc.get("guards", [])))

    transforms = []
    for k, t in enumerate(doc.get("transforms", [])):
        path = f"$.transforms[{k}]"
        target = t.get("target")
        if target not in TARGETS:
            errors.append((f"{path}.target", f"must be one of {list(TARGETS)}"))
        maps = t.get("maps", {})
        extra = {t.get("fiber", DEFAULT_FIBER)} if target == "lift" else set()
        parsed = {name: _parse_at(src, f"{path}.maps.{name}", allowed | extra, errors)
                  for name, src in maps.items()}
        expected = n + 1 if target == "lift" else n
        if len(parsed) != expected:
            errors.append((f"{path}.maps", f"needs {expected} maps for target {target}"))
        transforms.append(Transform(t.get("name", f"T{k}"), target, parsed))

    generators = []
    for k, gdoc in enumerate(doc.get("generators", [])):
        path = f"$.generators[{k}]"
        xi = _parse_at(gdoc.get("xi", "0"), f"{path}.xi", allowed, errors)
        eta = {}
        for c, src in gdoc.get("eta", {}).items():
            if c not in coords:
                errors.append((f"{path}.eta.{c}", "not a coordinate"))
            eta[c] = _parse_at(src, f"{path}.eta.{c}", allowed, errors)
        f = _parse_at(gdoc.get("boundary", "0"), f"{path}.boundary", allowed, errors)
        generators.append(Generator(gdoc.get("name", f"X{k + 1}"), xi, eta, f))

    if errors:
        raise SpecError(errors)
    metric = MetricField(tuple(coords), tuple(tuple(r) for r in comps),
                         {k: float(v) for k, v in params.items()}, domain, guards, doc["name"])
    return SystemSpec(doc["name"], metric, potential, domain, guards,
                      tuple(transforms), tuple(generators))


def serialize(s: SystemSpec) -> dict:
    n = s.dim
    doc = {
        "name": s.name,
        "coordinates": list(s.coords),
        "parameters": dict(s.params),
        "metric": [[to_string(s.metric.component(i, j)) for j in range(n)] for i in range(n)],
        "potential": to_string(s.potential),
        "domain": {c: list(s.domain[c]) for c in s.coords},
    }
    if s.guards:
        doc["guards"] = [to_string(g) for g in s.guards]
    if s.transforms:
        doc["transforms"] = [{"name": t.name, "target": t.target,
                              "maps": {k: to_string(v) for k, v in t.maps.items()}}
                             for t in s.transforms]
    if s.generators:
        doc["generators"] = [{"name": g.name, "xi": to_string(g.xi),
                              "eta": {k: to_string(v) for k, v in g.eta.items()},
                              "boundary": to_string(g.boundary)} for g in s.generators]
    return doc


# ---------------------------------------------------------------------------
# geometrisations
# ---------------------------------------------------------------------------


def _scaled(m: MetricField, factor: Expr, inverse: bool) -> tuple[tuple[Expr, ...], ...]:
    op = div if inverse else (lambda a, b: mul(b, a))
    n = m.dim
    return tuple(tuple(op(m.components[i][j], factor) if j >= i else m.components[i][j]
                       for j in range(n)) for i in range(n))


def jacobi_metric(s: SystemSpec, convention: str = CANONICAL) -> MetricField:
    """Jacobi metric V*g (canonical) or g/V (inverse)."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    comps = _scaled(s.metric, s.potential, convention == INVERSE)
    return MetricField(s.coords, comps, dict(s.params), dict(s.domain), s.all_guards(),
                       f"{s.name}:jacobi-{convention}")


def _extend(m: MetricField, fiber: str, gzz: Expr, base: SystemSpec) -> MetricField:
    if fiber in m.coords or fiber in m.params:
        raise ValueError(f"fiber name {fiber!r} collides with an existing symbol")
    n = m.dim
    rows = [tuple(m.components[i]) + (Const(0.0),) for i in range(n)]
    rows.append(tuple(Const(0.0) for _ in range(n)) + (gzz,))
    domain = {**dict(base.domain), fiber: FIBER_RANGE}
    return MetricField(m.coords + (fiber,), tuple(rows), dict(m.params), domain,
                       base.all_guards(), m.name)


def eisenhart_lift(s: SystemSpec, fiber: str = DEFAULT_FIBER) -> MetricField:
    """g + (1/V) dz^2."""
    m = _extend(s.metric, fiber, div(Const(1.0), s.potential), s)
    return replace(m, name=f"{s.name}:lift")


def jacobi_eisenhart_lift(s: SystemSpec, convention: str = CANONICAL,
                          fiber: str = DEFAULT_FIBER) -> MetricField:
    """Jacobi metric + dz^2."""
    m = _extend(jacobi_metric(s, convention), fiber, Const(1.0), s)
    return replace(m, name=f"{s.name}:jacobi-lift-{convention}")


def conformal_rescale(m: MetricField, factor: Expr | str) -> MetricField:
    factor = as_expr(factor)
    unknown = validate_symbols(factor, set(m.coords) | set(m.params))
    if unknown:
        raise ValueError(f"conformal factor uses unknown symbols {unknown}")
    comps = _scaled(m, factor, inverse=False)
    return replace(m, components=comps, name=f"{m.name}*conformal")


# ---------------------------------------------------------------------------
# one-dimensional flattening
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TabulatedTransform:
    """Y(q) = int_{q0}^{q} |V(s)|^{-1/2} ds, tabulated by adaptive quadrature."""

    name: str
    coord: str
    q0: float
    spline: CubicHermiteSpline
    target: str = "jacobi-canonical"

    def __call__(self, env: Mapping[str, float]) -> np.ndarray:
        return np.array([float(self.spline(env[self.coord]))])

    @property
    def new_coords(self) -> tuple[str, ...]:
        return ("Y",)

    def y(self, q):
        return self.spline(q)


def flatten_1d(s: SystemSpec, nodes: int = 1025) -> TabulatedTransform:
    if s.dim != 1:
        raise ValueError("flatten_1d needs a one-dimensional system")
    (c,) = s.coords
    lo, hi = s.domain[c]
    qs = np.linspace(lo, hi, nodes)
    vs = np.array([s.V([q]) for q in qs])
    if np.any(vs == 0.0) or np.any(np.sign(vs) != np.sign(vs[0])):
        raise ValueError(f"potential changes sign on [{lo}, {hi}]")

    def f(q):
        return 1.0 / math.sqrt(abs(s.V([q])))

    ys = np.zeros(nodes)
    for k in range(1, nodes):
        piece, _ = integrate.quad(f, qs[k - 1], qs[k], epsabs=1e-14, epsrel=1e-13)
        ys[k] = ys[k - 1] + piece
    dys = 1.0 / np.sqrt(np.abs(vs))
    return TabulatedTransform(f"{s.name}:flatten", c, lo, CubicHermiteSpline(qs, ys, dys))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 stream; `uniform()` returns (x >> 11) * 2^-53 in [0, 1)."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next() >> 11) * 2.0**-53)


def _admissible(m: MetricField, guards, env, point) -> tuple[bool, tuple[str, float] | None]:
    for g in guards:
        try:
            val = eval_scalar(g, env)
        except ExprDomainError:
            return False, None
        if abs(val) < GUARD_TOL:
            return False, (to_string(g), abs(val))
    try:
        check_invertible(m.values(point))
    except (ExprDomainError, SingularMetricError):
        return False, None
    return True, None


def sample_points(target: SystemSpec | MetricField, count: int, seed: int = 0) -> list[tuple[float, ...]]:
    """Deterministic uniform points in the domain box that pass every guard.

    Candidates consume one draw per coordinate in coordinate order, so a
    longer request with the same seed extends a shorter one.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if isinstance(target, SystemSpec):
        m, guards, domain = target.metric, target.all_guards(), target.domain
    else:
        m, guards, domain = target, target.guards, target.domain
    if domain is None:
        raise ValueError("metric has no sampling domain")
    rng = SplitMix64(seed)
    out: list[tuple[float, ...]] = []
    rejected = 0
    tightest: tuple[str, float] | None = None
    while len(out) < count:
        point = tuple(rng.uniform(*domain[c]) for c in m.coords)
        env = {**m.params, **dict(zip(m.coords, point))}
        ok, why = _admissible(m, guards, env, point)
        if ok:
            out.append(point)
            continue
        rejected += 1
        if why is not None and (tightest is None or why[1] < tightest[1]):
            tightest = why
        if rejected >= 1000 * count:
            detail = f"; tightest guard `{tightest[0]}`" if tightest else ""
            raise SamplingError(f"rejection budget exhausted after {rejected} candidates{detail}")
    return out


def symbolic_inverse(m: MetricField) -> list[list[Expr]]:
    """Inverse metric as Exprs via cofactors (fine for the small dimensions used here)."""
    n = m.dim
    a = [[m.component(i, j) for j in range(n)] for i in range(n)]

    def det(rows: list[list[Expr]]) -> Expr:
        if not rows:
            return Const(1.0)
        if len(rows) == 1:
            return rows[0][0]
        total: Expr = Const(0.0)
        for j, head in enumerate(rows[0]):
            if head == Const(0.0):
                continue
            term = mul(head, det([r[:j] + r[j + 1:] for r in rows[1:]]))
            total = add(total, term) if j % 2 == 0 else sub(total, term)
        return total

    d = det(a)
    inv: list[list[Expr]] = [[Const(0.0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            cof = det([r[:i] + r[i + 1:] for k, r in enumerate(a) if k != j])
            inv[i][j] = div(neg(cof) if (i + j) % 2 else cof, d)
    return inv
