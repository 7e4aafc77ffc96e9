"""Constrained equations of motion, lifted geodesics and conservation checks.

Gauge N = 1 throughout: qddot^i = -Gamma^i_jk qdot^j qdot^k - g^ij d_j V,
momenta p_i = g_ij qdot^j, constraint H = 1/2 g_ij qdot^i qdot^j + V = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .curvature import MetricField, SingularMetricError, check_invertible
from .exprjet import (
    Const, Expr, ExprDomainError, Jet, add, eval_jet, eval_scalar, jeinsum, jet_inverse,
    jet_space, mul, parse, sub,
)
from .systems import (
    SamplingError, SplitMix64, SystemSpec, eisenhart_lift, sample_points,
    symbolic_inverse,
)


class ConstraintError(ValueError):
    pass


def momentum_name(coord: str) -> str:
    return f"p_{coord}"


# ---------------------------------------------------------------------------
# equations of motion
# ---------------------------------------------------------------------------


def _connection_values(m: MetricField, q: Sequence[float]):
    jets = {}
    n = m.dim
    for i in range(n):
        for j in range(i, n):
            jets[i, j] = eval_jet(m.component(i, j), q, m.coords, m.params)
    g = np.empty((n, n))
    dg = np.empty((n, n, n))
    for (i, j), jt in jets.items():
        g[i, j] = g[j, i] = jt.coef[0]
        dg[i, j] = dg[j, i] = jt.coef[1:1 + n]
    check_invertible(g)
    ginv = np.linalg.inv(g)
    lower = 0.5 * (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1))
    return g, ginv, np.einsum("il,ljk->ijk", ginv, lower)


def geodesic_rhs(m: MetricField, x, xd) -> np.ndarray:
    _, _, gam = _connection_values(m, x)
    return -np.einsum("ijk,j,k->i", gam, xd, xd)


def eom_rhs(s: SystemSpec, q, qd) -> np.ndarray:
    """Accelerations of the constrained system at (q, qdot)."""
    _, ginv, gam = _connection_values(s.metric, q)
    dv = eval_jet(s.potential, q, s.coords, s.params).coef[1:1 + s.dim]
    qd = np.asarray(qd, dtype=float)
    return -np.einsum("ijk,j,k->i", gam, qd, qd) - ginv @ dv


def constraint(s: SystemSpec, q, qd) -> float:
    g = s.metric.values(q)
    qd = np.asarray(qd, dtype=float)
    return 0.5 * qd @ g @ qd + s.V(q)


def project_to_constraint(s: SystemSpec, q, direction) -> np.ndarray:
    """Rescale `direction` so that 1/2 g(qdot, qdot) + V = 0."""
    d = np.asarray(direction, dtype=float)
    gdd = d @ s.metric.values(q) @ d
    v = s.V(q)
    if gdd == 0.0:
        raise ConstraintError("direction is null for g; cannot reach the constraint surface")
    lam2 = -2.0 * v / gdd
    if not lam2 > 0.0:
        raise ConstraintError(
            f"constraint surface empty along this direction: g(d,d)={gdd:.6g} and V={v:.6g} "
            "must have opposite signs")
    return math.sqrt(lam2) * d


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    name: str
    coords: tuple[str, ...]
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    H: np.ndarray
    tau: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    truncated_at: float | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def env(self, k: int) -> dict[str, float]:
        return {**self.params, **dict(zip(self.coords, self.q[k]))}

    def to_csv(self) -> str:
        header = ["t", *self.coords, *(f"{c}_dot" for c in self.coords), "H", "tau", *self.columns]
        lines = [",".join(header)]
        extra = list(self.columns.values())
        for k in range(len(self.t)):
            row = [self.t[k], *self.q[k], *self.qd[k], self.H[k], self.tau[k],
                   *(col[k] for col in extra)]
            lines.append(",".join(_fmt(x) for x in row))
        if self.truncated_at is not None:
            lines.append(f"# truncated_at={_fmt(self.truncated_at)}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _inside(domain, coords, q) -> bool:
    return all(domain[c][0] <= x <= domain[c][1] for c, x in zip(coords, q))


def _rk4(rhs, x0, v0, dt: float, steps: int, admissible):
    """Fixed-step RK4 for x'' = rhs(x, x'). Stops early if a state is inadmissible."""
    xs, vs = [np.asarray(x0, float)], [np.asarray(v0, float)]
    x, v = xs[0], vs[0]
    for _ in range(steps):
        try:
            a1 = rhs(x, v)
            x2, v2 = x + 0.5 * dt * v, v + 0.5 * dt * a1
            a2 = rhs(x2, v2)
            x3, v3 = x + 0.5 * dt * v2, v + 0.5 * dt * a2
            a3 = rhs(x3, v3)
            x4, v4 = x + dt * v3, v + dt * a3
            a4 = rhs(x4, v4)
        except (ExprDomainError, SingularMetricError, np.linalg.LinAlgError):
            return xs, vs, True
        xn = x + dt / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
        vn = v + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(vn)) and admissible(xn)):
            return xs, vs, True
        x, v = xn, vn
        xs.append(x)
        vs.append(v)
    return xs, vs, False


def _guards_ok(s: SystemSpec, q) -> bool:
    env = s.env(q)
    try:
        return all(abs(eval_scalar(g, env)) >= 1e-10 for g in s.all_guards())
    except ExprDomainError:
        return False


def integrate(s: SystemSpec, q0, qd0, T: float, dt: float) -> Trajectory:
    """Classical RK4 on the N = 1 equations of motion.

    Leaving the domain box or tripping a guard truncates the run; the partial
    trajectory is returned with `truncated_at` set.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    q0 = np.asarray(q0, float)
    if not (_inside(s.domain, s.coords, q0) and _guards_ok(s, q0)):
        raise ExprDomainError(f"initial point {tuple(q0)} is not admissible for {s.name}")
    eom_rhs(s, q0, qd0)
    steps = int(round(T / dt))
    if steps < 1 or abs(T / dt - steps) > 1e-6:
        raise ValueError(f"horizon {T} is not a whole number of steps of {dt}")

    def ok(q):
        return _inside(s.domain, s.coords, q) and _guards_ok(s, q)

    xs, vs, cut = _rk4(lambda x, v: eom_rhs(s, x, v), q0, qd0, dt, steps, ok)
    q = np.array(xs)
    qd = np.array(vs)
    t = dt * np.arange(len(q))
    H = np.array([constraint(s, a, b) for a, b in zip(q, qd)])
    V = np.array([s.V(a) for a in q])
    tau = np.concatenate([[0.0], np.cumsum(0.5 * dt * (V[1:] + V[:-1]))])
    return Trajectory(s.name, s.coords, t, q, qd, H, tau,
                      truncated_at=float(t[-1]) if cut else None, params=dict(s.params))


def integrate_geodesic(m: MetricField, x0, xd0, S: float, ds: float):
    """Affinely parametrised geodesic of `m`; returns (s, x, xdot, truncated)."""
    steps = int(round(S / ds))

    def ok(x):
        try:
            check_invertible(m.values(x))
        except (ExprDomainError, SingularMetricError):
            return False
        return True

    xs, vs, cut = _rk4(lambda x, v: geodesic_rhs(m, x, v), x0, xd0, ds, steps, ok)
    return ds * np.arange(len(xs)), np.array(xs), np.array(vs), cut


@dataclass
class LiftRecovery:
    base: Trajectory
    lifted_s: np.ndarray
    lifted: np.ndarray
    lifted_velocity: np.ndarray
    residual: float
    fiber_charge_drift: float


def null_lift_recover(s: SystemSpec, I0: float, q0, qd0, T: float, dt: float,
                      fiber: str = "z") -> LiftRecovery:
    """Integrate null geodesics of g + dz^2/V with zdot = I0 V and project to q.

    With (I0)^2 = 1 the lifted affine parameter runs sqrt(2) times faster than
    the N = 1 time of the base system: the lifted constraint reads
    g(qdot, qdot) = -V while the base one reads g(qdot, qdot) = -2V. The lifted
    run therefore starts from qdot0 / sqrt(2) and steps by sqrt(2) dt, so row k
    of both runs refers to the same point of the orbit.
    """
    if not math.isclose(I0 * I0, 1.0, rel_tol=0, abs_tol=1e-15):
        raise ValueError(f"lift recovery requires I0^2 = 1, got I0 = {I0}")
    base = integrate(s, q0, qd0, T, dt)
    lift = eisenhart_lift(s, fiber)
    c = math.sqrt(2.0)
    v0 = s.V(q0)
    x0 = np.concatenate([np.asarray(q0, float), [0.0]])
    xd0 = np.concatenate([np.asarray(qd0, float) / c, [I0 * v0]])
    ss, xs, xds, _ = integrate_geodesic(lift, x0, xd0, c * T, c * dt)
    k = min(len(base), len(xs))
    resid = float(np.max(np.linalg.norm(xs[:k, :-1] - base.q[:k], axis=1)))
    charge = np.array([xd[-1] / s.V(x[:-1]) for x, xd in zip(xs, xds)])
    return LiftRecovery(base, ss, xs, xds, resid, float(np.max(np.abs(charge - I0))))


# ---------------------------------------------------------------------------
# transforms and straightness
# ---------------------------------------------------------------------------


def apply_transform(tr, traj: Trajectory) -> Trajectory:
    """Copy of `traj` with the transform's columns appended; a domain error truncates."""
    rows = []
    for k in range(len(traj)):
        try:
            rows.append(tr(traj.env(k)))
        except ExprDomainError:
            break
    traj = _truncate(traj, len(rows)) if len(rows) < len(traj) else replace(traj, columns=dict(traj.columns))
    cols = np.array(rows).reshape(len(rows), -1)
    for name, col in zip(tr.new_coords, cols.T):
        traj.columns[name] = col
    return traj


def _truncate(traj: Trajectory, k: int) -> Trajectory:
    return Trajectory(traj.name, traj.coords, traj.t[:k], traj.q[:k], traj.qd[:k], traj.H[:k],
                      traj.tau[:k], {n: c[:k] for n, c in traj.columns.items()},
                      float(traj.t[k - 1]) if k else 0.0, traj.params)


def straightness_residual(points) -> float:
    """sigma_2 / sigma_1 of the centred point cloud; zero iff collinear."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise ValueError("need at least 3 points")
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[0] == 0.0:
        raise ValueError("degenerate point set (all points coincide)")
    return float(sv[1] / sv[0]) if len(sv) > 1 else 0.0


def affine_check(traj: Trajectory, names: Sequence[str]) -> float:
    """Max linear-fit error of each named column against Jacobi time, over its range."""
    tau = traj.tau
    steps = np.diff(tau)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("Jacobi time is not monotone along the trajectory (V changes sign)")
    A = np.column_stack([tau, np.ones_like(tau)])
    worst = 0.0
    for name in names:
        y = traj.columns[name]
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        span = float(np.ptp(y)) or 1.0
        worst = max(worst, float(np.max(np.abs(A @ coef - y))) / span)
    return worst


# ---------------------------------------------------------------------------
# charges
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChargeSpec:
    name: str
    expr: Expr
    note: str = ""


def hamiltonian_expr(s: SystemSpec) -> Expr:
    """1/2 g^ij p_i p_j + V as an Expr over coordinates and momenta."""
    inv = symbolic_inverse(s.metric)
    ps = [parse(momentum_name(c)) for c in s.coords]
    kin: Expr = Const(0.0)
    for i in range(s.dim):
        for j in range(s.dim):
            kin = add(kin, mul(inv[i][j], mul(ps[i], ps[j])))
    return add(mul(Const(0.5), kin), s.potential)


def noether_charge_from_generator(s: SystemSpec, gen) -> ChargeSpec:
    """Phi = xi (1/2 g^ij p_i p_j + V) - eta^i p_i + f, pairing eta with dL/dqdot."""
    phi: Expr = Const(0.0)
    if gen.xi != Const(0.0):
        phi = mul(gen.xi, hamiltonian_expr(s))
    for c in s.coords:
        eta = gen.eta.get(c, Const(0.0))
        phi = sub(phi, mul(eta, parse(momentum_name(c))))
    phi = add(phi, gen.boundary)
    return ChargeSpec(gen.name, phi, f"from generator {gen.name}")


def momenta(s: SystemSpec, q, qd) -> np.ndarray:
    return s.metric.values(q) @ np.asarray(qd, dtype=float)


def charge_values(s: SystemSpec, ch: ChargeSpec, traj: Trajectory) -> np.ndarray:
    out = np.empty(len(traj))
    for k in range(len(traj)):
        env = traj.env(k)
        env.update({momentum_name(c): p for c, p in zip(s.coords, momenta(s, traj.q[k], traj.qd[k]))})
        out[k] = eval_scalar(ch.expr, env)
    return out


def charge_drift(s: SystemSpec, ch: ChargeSpec, traj: Trajectory) -> dict:
    vals = charge_values(s, ch, traj)
    drift = float(np.max(np.abs(vals - vals[0])))
    return {"initial": float(vals[0]), "max_drift": drift,
            "normalized": drift / max(abs(float(vals[0])), 1.0)}


def _phase_jets(s: SystemSpec, ch: ChargeSpec, q, p):
    names = list(s.coords) + [momentum_name(c) for c in s.coords]
    point = list(map(float, q)) + list(map(float, p))
    n = s.dim
    space = jet_space(2 * n)
    phi = eval_jet(ch.expr, point, names, s.params)
    comps = [[eval_jet(s.metric.component(i, j), point, names, s.params) for j in range(n)]
             for i in range(n)]
    g = Jet.stack([c for row in comps for c in row], (n, n))
    ginv = jet_inverse(g)
    P = Jet.stack([Jet.variable(space, n + i, point[n + i]) for i in range(n)], (n,))
    kin = jeinsum("i,i->", jeinsum("ij,j->i", ginv, P), P)
    H = kin * 0.5 + eval_jet(s.potential, point, names, s.params)
    return phi, H


def poisson_bracket(s: SystemSpec, ch: ChargeSpec, q, p, reverse: bool = False) -> tuple[float, float]:
    """({Phi, H}, H) at a phase point; `reverse` gives {H, Phi} instead."""
    phi, H = _phase_jets(s, ch, q, p)
    n = s.dim
    a, b = (H, phi) if reverse else (phi, H)
    ga, gb = a.coef[1:1 + 2 * n], b.coef[1:1 + 2 * n]
    val = float(ga[:n] @ gb[n:] - ga[n:] @ gb[:n])
    return val, float(H.value)


def on_shell_phase_points(s: SystemSpec, samples: int, seed: int):
    qs = sample_points(s, samples, seed)
    rng = SplitMix64(seed ^ 0x5EED)
    out = []
    for q in qs:
        for _ in range(1000):
            d = [rng.uniform(-1.0, 1.0) for _ in s.coords]
            try:
                qd = project_to_constraint(s, q, d)
            except ConstraintError:
                continue
            out.append((q, momenta(s, q, qd)))
            break
        else:
            raise SamplingError(f"no direction reaches the constraint surface at {q}")
    return out


def weak_noether_check(s: SystemSpec, ch: ChargeSpec, samples: int = 50, seed: int = 0) -> dict:
    """Bracket {Phi, H} on and off the constraint surface.

    On-shell the bracket must vanish. Off-shell, chi is fitted from
    {Phi, H} ~ chi H and reported when the fit is exact to 1e-6 relative.
    """
    on = [poisson_bracket(s, ch, q, p)[0] for q, p in on_shell_phase_points(s, samples, seed)]
    rng = SplitMix64(seed ^ 0x0FF5)
    brackets, hs = [], []
    for q in sample_points(s, samples, seed + 1):
        p = [rng.uniform(-2.0, 2.0) for _ in s.coords]
        b, h = poisson_bracket(s, ch, q, p)
        brackets.append(b)
        hs.append(h)
    B, Hs = np.array(brackets), np.array(hs)
    scale = float(np.linalg.norm(B))
    chi = float(B @ Hs / (Hs @ Hs))
    fit = float(np.linalg.norm(B - chi * Hs)) / scale if scale > 1e-12 * max(1.0, float(np.linalg.norm(Hs))) else 0.0
    if fit == 0.0 and scale <= 1e-12 * max(1.0, float(np.linalg.norm(Hs))):
        chi = 0.0
    return {"on_shell_max": float(np.max(np.abs(on))), "chi": chi if fit < 1e-6 else None,
            "fit_residual": fit}
