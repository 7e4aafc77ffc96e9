"""Levi-Civita curvature of expression-valued metrics, evaluated pointwise.

Conventions:
    Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk)
    R^r_smn    = d_m Gamma^r_ns - d_n Gamma^r_ms + Gamma^r_ml Gamma^l_ns - Gamma^r_nl Gamma^l_ms
    R_mn       = R^l_mln,  R = g^mn R_mn

With these signs the unit sphere has R = +2.

Normalised residuals divide by the natural reference tensor plus a
curvature scale built from the metric's own derivatives, so that exactly
vanishing tensors evaluated in curvilinear charts report round-off level
values instead of 0/0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exprjet import Expr, Jet, as_expr, eval_jet, eval_scalar, jeinsum, jet_inverse, jet_space, symbols

EPS = 1e-300


class SingularMetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric matrix of Expr components over named coordinates.

    The upper triangle is the source of truth. `domain` and `guards` are
    optional and only used for sampling.
    """

    coords: tuple[str, ...]
    components: tuple[tuple[Expr, ...], ...]
    params: Mapping[str, float] = field(default_factory=dict)
    domain: Mapping[str, tuple[float, float]] | None = None
    guards: tuple[Expr, ...] = ()
    name: str = ""

    @classmethod
    def from_strings(cls, coords, rows, params=None, **kw) -> "MetricField":
        comps = tuple(tuple(as_expr(c) for c in row) for row in rows)
        return cls(tuple(coords), comps, dict(params or {}), **kw)

    @classmethod
    def diagonal(cls, coords, diag, params=None, **kw) -> "MetricField":
        n = len(coords)
        rows = [[diag[i] if i == j else "0" for j in range(n)] for i in range(n)]
        return cls.from_strings(coords, rows, params, **kw)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def component(self, i: int, j: int) -> Expr:
        return self.components[min(i, j)][max(i, j)]

    def symbols(self) -> set[str]:
        out: set[str] = set()
        for i in range(self.dim):
            for j in range(i, self.dim):
                out |= symbols(self.component(i, j))
        return out

    def with_params(self, **values) -> "MetricField":
        return MetricField(self.coords, self.components, {**self.params, **values},
                           self.domain, self.guards, self.name)

    def values(self, point: Sequence[float]) -> np.ndarray:
        env = {**self.params, **dict(zip(self.coords, map(float, point)))}
        n = self.dim
        g = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                g[i, j] = g[j, i] = eval_scalar(self.component(i, j), env)
        return g

    def jet(self, point: Sequence[float]) -> Jet:
        n = self.dim
        space = jet_space(n)
        cache: dict[tuple[int, int], Jet] = {}
        for i in range(n):
            for j in range(i, n):
                cache[i, j] = eval_jet(self.component(i, j), point, self.coords, self.params)
        flat = [cache[min(i, j), max(i, j)] for i in range(n) for j in range(n)]
        return Jet.stack(flat, (n, n)) if n else Jet.constant(space, np.zeros((0, 0)))


def check_invertible(g: np.ndarray) -> None:
    n = g.shape[0]
    scale = np.max(np.abs(g)) if g.size else 0.0
    det = np.linalg.det(g) if n else 1.0
    if not np.all(np.isfinite(g)) or abs(det) <= 1e-12 * scale**n:
        raise SingularMetricError(f"metric singular (det={det:.3e})")


# ---------------------------------------------------------------------------
# frames and norms
# ---------------------------------------------------------------------------


def frame(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal frame and coframe from the eigendecomposition of g.

    Columns of the frame are eigenvectors (ascending eigenvalue) scaled by
    1/sqrt|lambda|; the coframe rows are scaled by sqrt|lambda|.
    """
    w, v = np.linalg.eigh(g)
    e = v / np.sqrt(np.abs(w))
    theta = (v * np.sqrt(np.abs(w))).T
    return e, theta


def frame_norm(tensor: np.ndarray, g: np.ndarray, upper: Sequence[int] = ()) -> float:
    """Euclidean norm of `tensor` after moving every index to an orthonormal frame.

    Indices listed in `upper` are contravariant; all others are covariant.
    """
    e, theta = frame(g)
    t = np.asarray(tensor, dtype=float)
    for axis in range(t.ndim):
        mat = theta if axis in upper else e.T
        t = np.moveaxis(np.tensordot(mat, t, axes=([1], [axis])), 0, axis)
    return float(np.sqrt(np.sum(t * t)))


# ---------------------------------------------------------------------------
# connection and curvature
# ---------------------------------------------------------------------------


@dataclass
class Connection:
    point: tuple[float, ...]
    g: Jet  # order 3
    ginv: Jet  # order 3
    gamma: Jet  # Gamma^i_jk, order 2

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def scales(self) -> tuple[float, float]:
        """Round-off reference magnitudes for curvature and its first derivative."""
        g0 = self.g.value
        a1, a2, a3 = (frame_norm(self.g.tensor(k), g0) for k in (1, 2, 3))
        return a2 + a1**2, a3 + a2 * a1 + a1**3


def christoffel(m: MetricField, point: Sequence[float]) -> Connection:
    point = tuple(float(x) for x in point)
    g = m.jet(point)
    check_invertible(g.value)
    ginv = jet_inverse(g)
    dg = g.grad()  # [a, b, c] = d_c g_ab
    lower = (dg.transpose((0, 2, 1)) + dg - dg.transpose((2, 0, 1))) * 0.5
    # lower[l, j, k] = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    gamma = jeinsum("il,ljk->ijk", ginv, lower)
    return Connection(point, g, ginv, gamma)


@dataclass
class Curvature:
    conn: Connection
    riemann_up: Jet  # R^r_smn, order 1
    riemann: Jet  # R_rsmn, order 1
    ricci: Jet  # R_mn, order 1
    scalar: Jet  # R, order 1

    @property
    def n(self) -> int:
        return self.conn.n


def riemann(conn: Connection) -> Curvature:
    gam = conn.gamma
    d = gam.grad()  # [r, n, s, m] = d_m Gamma^r_ns
    a = d.transpose((0, 2, 3, 1))  # [r, s, m, n]
    quad = jeinsum("rml,lns->rsmn", gam, gam)
    up = a - a.transpose((0, 1, 3, 2)) + quad - quad.transpose((0, 1, 3, 2))
    low = jeinsum("ir,rjkl->ijkl", conn.g, up)
    ric = Jet(up.space, np.einsum("lmlnZ->mnZ", up.coef), up.order)
    scalar = jeinsum("ij,ij->", conn.ginv, ric)
    return Curvature(conn, up, low, ric, scalar)


def curvature(m: MetricField, point: Sequence[float]) -> Curvature:
    return riemann(christoffel(m, point))


def ricci_scalar(m: MetricField, point: Sequence[float]) -> tuple[Jet, Jet]:
    c = curvature(m, point)
    return c.ricci, c.scalar


def covariant_ricci(c: Curvature) -> np.ndarray:
    """R_mn;k as a dense array indexed [m, n, k]."""
    gam = c.conn.gamma.value
    ric = c.ricci.value
    d = c.ricci.grad().value  # [m, n, k]
    return d - np.einsum("lkm,ln->mnk", gam, ric) - np.einsum("lkn,ml->mnk", gam, ric)


def cotton_york(c: Curvature, printed: bool = False) -> tuple[np.ndarray, float]:
    """Cotton-York tensor C[m, n, k] of a 3-metric and its normalised norm.

    C_mnk = R_mn;k - R_kn;m + 1/4 (R_;m g_nk - R_;k g_mn), antisymmetric in
    m <-> k and trace free. `printed=True` instead uses the trace term
    1/4 (R_;n g_mk - R_;k g_mn), which does not vanish on conformally flat
    metrics with non-constant scalar curvature; it is kept for comparison only.
    """
    if c.n != 3:
        raise ValueError(f"Cotton-York tensor needs dimension 3, got {c.n}")
    g = c.conn.g.value
    nabla = covariant_ricci(c)
    dR = c.scalar.grad().value
    cot = nabla - nabla.transpose((2, 1, 0))
    if printed:
        cot = cot + 0.25 * (np.einsum("n,mk->mnk", dR, g) - np.einsum("k,mn->mnk", dR, g))
    else:
        cot = cot + 0.25 * (np.einsum("m,nk->mnk", dR, g) - np.einsum("k,mn->mnk", dR, g))
    _, s3 = c.conn.scales()
    norm = frame_norm(cot, g) / (frame_norm(nabla, g) + s3 + EPS)
    return cot, norm


def weyl(c: Curvature) -> tuple[np.ndarray, float]:
    """Weyl tensor C_ijkl (n >= 4) and ||C|| / (||Riem|| + scale)."""
    n = c.n
    if n < 4:
        raise ValueError(f"Weyl tensor needs dimension >= 4, got {n}")
    g = c.conn.g.value
    rl = c.riemann.value
    ric = c.ricci.value
    r = float(c.scalar.value)
    gr = (np.einsum("ik,jl->ijkl", g, ric) - np.einsum("il,jk->ijkl", g, ric)
          - np.einsum("jk,il->ijkl", g, ric) + np.einsum("jl,ik->ijkl", g, ric))
    gg = np.einsum("ik,jl->ijkl", g, g) - np.einsum("il,jk->ijkl", g, g)
    w = rl - gr / (n - 2) + r * gg / ((n - 1) * (n - 2))
    s2, _ = c.conn.scales()
    norm = frame_norm(w, g) / (frame_norm(rl, g) + s2 + EPS)
    return w, norm


def sectional_constant(c: Curvature) -> float:
    n = c.n
    if n < 2:
        raise ValueError("sectional curvature needs dimension >= 2")
    return float(c.scalar.value) / (n * (n - 1))


def constant_curvature_residual(c: Curvature) -> tuple[float, float]:
    """(K, residual) for R_ijkl = K (g_ik g_jl - g_il g_jk), K = R / (n(n-1))."""
    k = sectional_constant(c)
    g = c.conn.g.value
    rl = c.riemann.value
    gg = np.einsum("ik,jl->ijkl", g, g) - np.einsum("il,jk->ijkl", g, g)
    s2, _ = c.conn.scales()
    resid = frame_norm(rl - k * gg, g) / (frame_norm(rl, g) + abs(k) * c.n + s2 + EPS)
    return k, resid


def bianchi_residual(c: Curvature) -> float:
    rl = c.riemann.value
    cyc = rl + rl.transpose((0, 2, 3, 1)) + rl.transpose((0, 3, 1, 2))
    g = c.conn.g.value
    s2, _ = c.conn.scales()
    return frame_norm(cyc, g) / (frame_norm(rl, g) + s2 + EPS)


def liouville_residual(u: Expr | str, kappa: float, point: Sequence[float],
                       coords: Sequence[str] = ("x", "y"), params=None) -> float:
    """U_xx + U_yy + 2 kappa exp(2U) at `point`.

    A zero residual everywhere means e^{2U} (dx^2 + dy^2) has constant Gaussian
    curvature 2 kappa.
    """
    u = as_expr(u)
    j = eval_jet(u, point, coords, params)
    lap = j.derivative((2, 0)) + j.derivative((0, 2))
    return float(lap + 2.0 * kappa * np.exp(2.0 * float(j.value)))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class CurvatureReport:
    point: tuple[float, ...]
    gamma: np.ndarray
    riemann_up: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    K: float | None
    max_sym: float | None
    cotton: float | None = None
    weyl: float | None = None
    cotton_tensor: np.ndarray | None = None
    weyl_tensor: np.ndarray | None = None

    def to_json(self, verbose: bool = False) -> dict:
        out = {
            "point": list(self.point),
            "K": self.K,
            "residuals": {"max_sym": self.max_sym, "cotton": self.cotton, "weyl": self.weyl},
            "R": self.scalar,
        }
        if verbose:
            tensors = {"gamma": self.gamma.tolist(), "riemann": self.riemann.tolist(),
                       "ricci": self.ricci.tolist()}
            if self.cotton_tensor is not None:
                tensors["cotton"] = self.cotton_tensor.tolist()
            if self.weyl_tensor is not None:
                tensors["weyl"] = self.weyl_tensor.tolist()
            out["tensors"] = tensors
        return out

    def dumps(self, verbose: bool = False) -> str:
        return json.dumps(self.to_json(verbose))


def report(m: MetricField, point: Sequence[float]) -> CurvatureReport:
    c = curvature(m, point)
    k = res = None
    if c.n >= 2:
        k, res = constant_curvature_residual(c)
    rep = CurvatureReport(
        c.conn.point, c.conn.gamma.value.copy(), c.riemann_up.value.copy(), c.riemann.value.copy(),
        c.ricci.value.copy(), float(c.scalar.value), k, res,
    )
    if c.n == 3:
        rep.cotton_tensor, rep.cotton = cotton_york(c)
    elif c.n >= 4:
        rep.weyl_tensor, rep.weyl = weyl(c)
    return rep
