"""Expression DSL and order-3 truncated Taylor arithmetic.

Expressions are small immutable ASTs. They can be evaluated over plain floats
(`eval_scalar`) or over jets (`eval_jet`), which carry every partial derivative
up to third order. Jet coefficients use the Taylor normalisation: the
coefficient stored for multi-index mu is d^mu f / mu!.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

FUNCTIONS = ("exp", "ln", "sin", "cos", "sqrt")
JET_ORDER = 3
MAX_JET_VARS = 16


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(ValueError):
    """Raised for division by zero and ln/sqrt/pow of inadmissible arguments."""

    def __init__(self, message: str, subexpr: "Expr | None" = None, point=None):
        text = message
        if subexpr is not None:
            text += f" in `{to_string(subexpr)}`"
        if point is not None:
            text += f" at {point}"
        super().__init__(text)
        self.subexpr = subexpr
        self.point = point


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Sym(Expr):
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("symbol name must be nonempty")


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    arg: Expr


def symbols(e: Expr) -> set[str]:
    if isinstance(e, Sym):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, (Neg, Call)):
        return symbols(e.arg)
    return symbols(e.left) | symbols(e.right)


# Smart constructors fold trivial constants so generated charges stay readable.
def add(a: Expr, b: Expr) -> Expr:
    if a == Const(0.0):
        return b
    if b == Const(0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if b == Const(0.0):
        return a
    if a == Const(0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if a == Const(0.0) or b == Const(0.0):
        return Const(0.0)
    if a == Const(1.0):
        return b
    if b == Const(1.0):
        return a
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if a == Const(0.0):
        return Const(0.0)
    if b == Const(1.0):
        return a
    return BinOp("/", a, b)


def neg(a: Expr) -> Expr:
    if a == Const(0.0):
        return a
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return Const(float(x))
    return parse(str(x))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                start = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise ExprSyntaxError(f"unexpected character {text[start]!r}", self._boff(start))
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.end = len(text)
        self.i = 0

    def _boff(self, char_offset: int) -> int:
        return len(self.text[:char_offset].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def where(self) -> int:
        tok = self.peek()
        return self._boff(tok[2] if tok else self.end)

    def take(self, value: str | None = None):
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of input", self.where())
        if value is not None and tok[1] != value:
            raise ExprSyntaxError(f"expected {value!r}, found {tok[1]!r}", self.where())
        self.i += 1
        return tok

    def parse(self) -> Expr:
        if not self.tokens:
            raise ExprSyntaxError("empty expression", 0)
        e = self.expr()
        if self.peek() is not None:
            raise ExprSyntaxError(f"unexpected token {self.peek()[1]!r}", self.where())
        return e

    def expr(self) -> Expr:
        left = self.term()
        while (tok := self.peek()) is not None and tok[1] in "+-":
            self.i += 1
            left = BinOp(tok[1], left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while (tok := self.peek()) is not None and tok[1] in "*/":
            self.i += 1
            left = BinOp(tok[1], left, self.unary())
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok is not None and tok[1] == "-":
            self.i += 1
            return Neg(self.unary())
        if tok is not None and tok[1] == "+":
            self.i += 1
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok[1] == "^":
            self.i += 1
            at = self.where()
            exponent = self.unary()
            if symbols(exponent):
                raise ExprSyntaxError("non-constant exponent", at)
            return BinOp("^", base, exponent)
        return base

    def atom(self) -> Expr:
        at = self.where()
        kind, value, _ = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "name":
            nxt = self.peek()
            if nxt is not None and nxt[1] == "(":
                if value not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {value!r}", at)
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(value, arg)
            return Sym(value)
        if value == "(":
            inner = self.expr()
            self.take(")")
            return inner
        raise ExprSyntaxError(f"unexpected token {value!r}", at)


def parse(text: str) -> Expr:
    """Parse `text` into an Expr.

    Precedence from loosest to tightest: ``+ -``, ``* /``, unary minus, ``^``
    (right associative). Exponents must be constant.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    if isinstance(e, Const) and e.value < 0:
        return _PREC["neg"]
    return _PREC["atom"]


def _num(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_string(e: Expr) -> str:
    """Canonical text; `parse(to_string(e)) == e` for every parsed AST."""
    if isinstance(e, Const):
        return _num(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        s = to_string(e.arg)
        return f"-({s})" if _prec(e.arg) < _PREC["neg"] else f"-{s}"
    p = _PREC[e.op]
    ls, rs = to_string(e.left), to_string(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            ls = f"({ls})"
        if _prec(e.right) < _PREC["neg"]:
            rs = f"({rs})"
        return f"{ls}^{rs}"
    if _prec(e.left) < p:
        ls = f"({ls})"
    if _prec(e.right) <= p:
        rs = f"({rs})"
    sep = " " if e.op in "+-" else ""
    return f"{ls}{sep}{e.op}{sep}{rs}"


def validate_symbols(e: Expr, allowed: Iterable[str]) -> list[str]:
    """Return the sorted unknown symbol names; an empty list means ok."""
    return sorted(symbols(e) - set(allowed))


# ---------------------------------------------------------------------------
# Jets
# ---------------------------------------------------------------------------


class JetSpace:
    """Index tables for order-3 jets in `n` variables.

    Multi-indices are stored once per sorted tuple of variable indices, in
    graded lexicographic order: degree first, then lexicographic.
    """

    def __init__(self, n: int, order: int = JET_ORDER):
        if not 0 <= n <= MAX_JET_VARS:
            raise ValueError(f"jet variable count must be in [0, {MAX_JET_VARS}], got {n}")
        self.n = n
        self.order = order
        self.indices: list[tuple[int, ...]] = []
        for d in range(order + 1):
            self.indices.extend(itertools.combinations_with_replacement(range(n), d))
        self.size = len(self.indices)
        self.position = {t: k for k, t in enumerate(self.indices)}
        self.degree = np.array([len(t) for t in self.indices])
        self.exponents = np.zeros((self.size, n), dtype=int)
        for k, t in enumerate(self.indices):
            for i in t:
                self.exponents[k, i] += 1
        self.factorial = np.array(
            [math.prod(math.factorial(int(a)) for a in row) for row in self.exponents], dtype=float
        )

        # truncated product: c[a+b] += x[a] * y[b]
        pa, pb, pc = [], [], []
        for a, ta in enumerate(self.indices):
            for b, tb in enumerate(self.indices):
                if len(ta) + len(tb) <= order:
                    pa.append(a)
                    pb.append(b)
                    pc.append(self.position[tuple(sorted(ta + tb))])
        perm = np.argsort(pc, kind="stable")
        self.pa = np.asarray(pa)[perm]
        self.pb = np.asarray(pb)[perm]
        pc_sorted = np.asarray(pc)[perm]
        self.segments = np.searchsorted(pc_sorted, np.arange(self.size))

        # derivative: (d_m f)[b] = (b_m + 1) * f[b + e_m]
        self.dsrc = np.zeros((n, self.size), dtype=int)
        self.dfac = np.zeros((n, self.size))
        for m in range(n):
            for b, tb in enumerate(self.indices):
                if len(tb) < order:
                    src = self.position[tuple(sorted(tb + (m,)))]
                    self.dsrc[m, b] = src
                    self.dfac[m, b] = self.exponents[src, m]

    def contract(self, pairs: np.ndarray) -> np.ndarray:
        """Sum a trailing pair axis into coefficient slots."""
        return np.add.reduceat(pairs, self.segments, axis=-1)


@lru_cache(maxsize=None)
def jet_space(n: int) -> JetSpace:
    return JetSpace(n)


class Jet:
    """Truncated Taylor polynomial, possibly tensor valued.

    `coef` has shape ``(*shape, space.size)``. `order` is the highest degree
    whose coefficients are exact; higher ones are kept at zero.
    """

    __slots__ = ("space", "coef", "order")
    __array_priority__ = 100

    def __init__(self, space: JetSpace, coef: np.ndarray, order: int = JET_ORDER):
        self.space = space
        self.coef = coef
        self.order = order

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, space: JetSpace, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (space.size,))
        coef[..., 0] = value
        return cls(space, coef)

    @classmethod
    def variable(cls, space: JetSpace, i: int, value: float) -> "Jet":
        coef = np.zeros(space.size)
        coef[0] = value
        coef[1 + i] = 1.0
        return cls(space, coef)

    @classmethod
    def stack(cls, jets: Sequence["Jet"], shape: tuple[int, ...] | None = None) -> "Jet":
        space = jets[0].space
        coef = np.stack([j.coef for j in jets])
        if shape is not None:
            coef = coef.reshape(shape + (space.size,))
        return cls(space, coef, min(j.order for j in jets))

    # views ----------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.coef.shape[:-1]

    @property
    def value(self):
        return self.coef[..., 0]

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.coef[idx], self.order)

    def transpose(self, axes: Sequence[int]) -> "Jet":
        return Jet(self.space, self.coef.transpose(tuple(axes) + (self.coef.ndim - 1,)), self.order)

    def coefficient(self, multi: Sequence[int]):
        """Coefficient for an exponent vector (length n), i.e. d^mu f / mu!."""
        t = tuple(i for i, k in enumerate(multi) for _ in range(k))
        return self.coef[..., self.space.position[t]]

    def derivative(self, multi: Sequence[int]):
        t = tuple(i for i, k in enumerate(multi) for _ in range(k))
        pos = self.space.position[t]
        return self.coef[..., pos] * self.space.factorial[pos]

    def tensor(self, k: int) -> np.ndarray:
        """Dense symmetric array of the k-th partial derivatives, indices appended."""
        n = self.space.n
        out = np.zeros(self.shape + (n,) * k)
        for t in itertools.product(range(n), repeat=k):
            pos = self.space.position[tuple(sorted(t))]
            out[(Ellipsis,) + t] = self.coef[..., pos] * self.space.factorial[pos]
        return out

    # arithmetic -----------------------------------------------------------
    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(self.space, other)

    def _truncate(self, coef: np.ndarray, order: int) -> np.ndarray:
        if order < self.space.order:
            coef[..., self.space.degree > order] = 0.0
        return coef

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.space, self.coef + other.coef, min(self.order, other.order))
        coef = self.coef.copy()
        coef[..., 0] += other
        return Jet(self.space, coef, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coef, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.space, self.coef * np.asarray(other, dtype=float)[..., None], self.order)
        sp = self.space
        pairs = self.coef[..., sp.pa] * other.coef[..., sp.pb]
        order = min(self.order, other.order)
        return Jet(sp, self._truncate(sp.contract(pairs), order), order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def compose(self, derivs: Sequence) -> "Jet":
        """f(self) given [f(x0), f'(x0), f''(x0), f'''(x0)] at the value part."""
        sp = self.space
        delta = Jet(sp, self.coef.copy(), self.order)
        delta.coef[..., 0] = 0.0
        taylor = [np.asarray(d, dtype=float) / math.factorial(k) for k, d in enumerate(derivs)]
        acc = Jet.constant(sp, taylor[sp.order])
        for k in range(sp.order - 1, -1, -1):
            acc = acc * delta + taylor[k]
        acc.order = self.order
        return acc

    def grad(self) -> "Jet":
        """Partial derivatives as a new trailing tensor axis; order drops by one."""
        sp = self.space
        coef = self.coef[..., sp.dsrc] * sp.dfac
        return Jet(sp, coef, self.order - 1)


def reciprocal(x: Jet) -> Jet:
    v = x.value
    if np.any(v == 0.0):
        raise ExprDomainError("division by zero")
    return x.compose([1.0 / v, -1.0 / v**2, 2.0 / v**3, -6.0 / v**4])


def jeinsum(subscripts: str, a: Jet, b) -> Jet:
    """Einstein summation of two jets (or a jet and a constant array)."""
    if not isinstance(b, Jet):
        ins, out = subscripts.split("->")
        sa, sb = ins.split(",")
        coef = np.einsum(f"{sa}Z,{sb}->{out}Z", a.coef, np.asarray(b, dtype=float))
        return Jet(a.space, coef, a.order)
    sp = a.space
    ins, out = subscripts.split("->")
    sa, sb = ins.split(",")
    pairs = np.einsum(f"{sa}Z,{sb}Z->{out}Z", a.coef[..., sp.pa], b.coef[..., sp.pb])
    order = min(a.order, b.order)
    return Jet(sp, a._truncate(sp.contract(pairs), order), order)


def jet_inverse(g: Jet) -> Jet:
    """Inverse of a jet-valued square matrix by Neumann series about its value."""
    g0 = g.value
    ginv0 = np.linalg.inv(g0)
    d = Jet(g.space, g.coef.copy(), g.order)
    d.coef[..., 0] = 0.0
    m = -jeinsum("ij,jk->ik", Jet.constant(g.space, ginv0), d)
    term = Jet.constant(g.space, ginv0)
    acc = Jet.constant(g.space, ginv0)
    for _ in range(g.space.order):
        term = jeinsum("ij,jk->ik", m, term)
        acc = acc + term
    acc.order = g.order
    return acc


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _check_args(func: str, v: float, node: Expr, point):
    if func in ("ln", "sqrt") and not v > 0.0:
        raise ExprDomainError(f"{func} of non-positive argument {v!r}", node, point)


def _pow_derivs(v: float, c: float, node: Expr, point) -> list[float]:
    if c != int(c) and not v > 0.0:
        raise ExprDomainError(f"non-integer power of non-positive base {v!r}", node, point)
    if c < 0 and v == 0.0:
        raise ExprDomainError("division by zero", node, point)
    out = []
    coeff = 1.0
    for k in range(JET_ORDER + 1):
        e = c - k
        if coeff == 0.0:
            out.append(0.0)
        else:
            out.append(coeff * (v**e if not (v == 0.0 and e == 0) else 1.0))
        coeff *= e
    return out


def _func_derivs(func: str, v: float) -> list[float]:
    if func == "exp":
        e = math.exp(v)
        return [e, e, e, e]
    if func == "ln":
        return [math.log(v), 1.0 / v, -1.0 / v**2, 2.0 / v**3]
    if func == "sin":
        s, c = math.sin(v), math.cos(v)
        return [s, c, -s, -c]
    if func == "cos":
        s, c = math.sin(v), math.cos(v)
        return [c, -s, -c, s]
    if func == "sqrt":
        r = math.sqrt(v)
        return [r, 0.5 / r, -0.25 / (r * v), 0.375 / (r * v * v)]
    raise ValueError(f"unknown function {func!r}")


def _constant_value(e: Expr) -> float:
    return eval_scalar(e, {})


def eval_scalar(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate in IEEE doubles; domain violations raise ExprDomainError."""
    return _eval_float(e, env)


def _eval_float(e: Expr, env) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Sym):
        try:
            return float(env[e.name])
        except KeyError:
            raise KeyError(f"unbound symbol {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval_float(e.arg, env)
    if isinstance(e, Call):
        v = _eval_float(e.arg, env)
        _check_args(e.func, v, e, dict(env))
        try:
            return _func_derivs(e.func, v)[0]
        except OverflowError:
            raise ExprDomainError("overflow", e, dict(env)) from None
    a = _eval_float(e.left, env)
    if e.op == "^":
        c = _constant_value(e.right)
        return _pow_derivs(a, c, e, dict(env))[0]
    b = _eval_float(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if b == 0.0:
        raise ExprDomainError("division by zero", e, dict(env))
    return a / b


def eval_jet(e: Expr, point: Sequence[float], var_order: Sequence[str],
             params: Mapping[str, float] | None = None) -> Jet:
    """Jet of `e` in the variables `var_order` about `point`.

    Symbols not in `var_order` are looked up in `params` and enter as constants.
    """
    space = jet_space(len(var_order))
    env: dict[str, Jet | float] = dict(params or {})
    for i, (name, x) in enumerate(zip(var_order, point)):
        env[name] = Jet.variable(space, i, float(x))
    where = dict(zip(var_order, map(float, point)))
    return _as_jet(_eval_jet(e, env, space, where), space)


def _as_jet(x, space: JetSpace) -> Jet:
    return x if isinstance(x, Jet) else Jet.constant(space, x)


def _eval_jet(e: Expr, env, space: JetSpace, where):
    # Plain floats stand in for constant jets until a variable is involved.
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Sym):
        try:
            return env[e.name]
        except KeyError:
            raise KeyError(f"unbound symbol {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval_jet(e.arg, env, space, where)
    if isinstance(e, Call):
        x = _eval_jet(e.arg, env, space, where)
        v = float(x.value) if isinstance(x, Jet) else float(x)
        _check_args(e.func, v, e, where)
        try:
            derivs = _func_derivs(e.func, v)
        except OverflowError:
            raise ExprDomainError("overflow", e, where) from None
        return x.compose(derivs) if isinstance(x, Jet) else derivs[0]
    a = _eval_jet(e.left, env, space, where)
    if e.op == "^":
        c = _constant_value(e.right)
        v = float(a.value) if isinstance(a, Jet) else float(a)
        derivs = _pow_derivs(v, c, e, where)
        if isinstance(a, Jet) and c == int(c) and 0 <= c <= 3:
            out = Jet.constant(space, 1.0)
            for _ in range(int(c)):
                out = out * a
            return out
        return a.compose(derivs) if isinstance(a, Jet) else derivs[0]
    b = _eval_jet(e.right, env, space, where)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    bv = float(b.value) if isinstance(b, Jet) else float(b)
    if bv == 0.0:
        raise ExprDomainError("division by zero", e, where)
    if isinstance(b, Jet):
        return a * reciprocal(b)
    return a / b


# ---------------------------------------------------------------------------
# Finite-difference oracle (test use)
# ---------------------------------------------------------------------------

FD_STEP = 1e-4
FD_DIGITS = 40

_STENCILS = {
    0: ((0, 1),),
    1: ((1, 0.5), (-1, -0.5)),
    2: ((1, 1), (0, -2), (-1, 1)),
    3: ((2, 0.5), (1, -1), (-1, 1), (-2, -0.5)),
}


def fd_oracle(e: Expr, point: Sequence[float], multi: Sequence[int],
              var_order: Sequence[str] | None = None,
              params: Mapping[str, float] | None = None) -> float:
    """Partial derivative d^multi e at `point` by nested central differences.

    The step along variable i is ``1e-4 * max(1, |x_i|)``. Evaluation runs in
    40-digit arithmetic (mpmath) so that only the O(h^2) truncation error
    remains; this keeps third derivatives usable as an oracle.
    """
    import mpmath

    if sum(multi) > 3:
        raise ValueError("fd_oracle supports total order <= 3")
    names = list(var_order) if var_order is not None else sorted(symbols(e) - set(params or {}))
    with mpmath.workdps(FD_DIGITS):
        steps = [mpmath.mpf(FD_STEP) * max(1, abs(x)) for x in point]
        total = mpmath.mpf(0)
        grids = [_STENCILS[k] for k in multi]
        for combo in itertools.product(*grids):
            weight = mpmath.mpf(1)
            env = {k: mpmath.mpf(v) for k, v in (params or {}).items()}
            for (shift, w), name, x, h, k in zip(combo, names, point, steps, multi):
                weight *= w
                env[name] = mpmath.mpf(x) + shift * h
            total += weight * _eval_mp(e, env)
        for h, k in zip(steps, multi):
            total /= h**k
        return float(total)


def _eval_mp(e: Expr, env):
    import mpmath

    if isinstance(e, Const):
        return mpmath.mpf(e.value)
    if isinstance(e, Sym):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval_mp(e.arg, env)
    if isinstance(e, Call):
        v = _eval_mp(e.arg, env)
        if e.func in ("ln", "sqrt") and not v > 0:
            raise ExprDomainError(f"{e.func} of non-positive argument", e)
        return {"exp": mpmath.exp, "ln": mpmath.log, "sin": mpmath.sin,
                "cos": mpmath.cos, "sqrt": mpmath.sqrt}[e.func](v)
    a = _eval_mp(e.left, env)
    if e.op == "^":
        c = _constant_value(e.right)
        if c == int(c):
            return a ** int(c)
        if not a > 0:
            raise ExprDomainError("non-integer power of non-positive base", e)
        return a ** mpmath.mpf(c)
    b = _eval_mp(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if b == 0:
        raise ExprDomainError("division by zero", e)
    return a / b
