import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geolin.catalog import catalog_get, catalog_list
from geolin.exprjet import (
    BinOp, Call, Const, ExprDomainError, ExprSyntaxError, Neg, Sym, eval_jet, eval_scalar,
    fd_oracle, jet_space, parse, to_string, validate_symbols,
)


def test_parse_precedence_example():
    u, v, L = Sym("u"), Sym("v"), Sym("L")
    expected = BinOp("-", BinOp("/", v, BinOp("^", u, Const(2.0))), BinOp("*", BinOp("*", L, u), v))
    assert parse("v/u^2 - L*u*v") == expected


def test_unary_minus_binds_looser_than_power():
    assert parse("-x^2") == Neg(BinOp("^", Sym("x"), Const(2.0)))
    assert eval_scalar(parse("-x^2"), {"x": 3.0}) == -9.0


def test_power_is_right_associative():
    assert eval_scalar(parse("2^3^2"), {}) == 512.0


def test_unbalanced_paren_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("exp(q1-q2")
    assert info.value.offset == 9


def test_unknown_function_and_symbolic_exponent():
    with pytest.raises(ExprSyntaxError):
        parse("tan(x)")
    with pytest.raises(ExprSyntaxError):
        parse("x^y")
    assert eval_scalar(parse("x^(1/2)"), {"x": 4.0}) == 2.0


def test_scientific_literals():
    assert eval_scalar(parse("1.5e-3*2"), {}) == pytest.approx(3e-3)


@pytest.mark.parametrize("text, allowed, errors", [
    ("v/u^2", {"u", "v"}, []),
    ("v/u^2 - L*u*v", {"u", "v"}, ["L"]),
    ("3.5", set(), []),
])
def test_validate_symbols(text, allowed, errors):
    assert validate_symbols(parse(text), allowed) == errors


def test_eval_scalar_examples():
    assert eval_scalar(parse("v/u^2 - L*u*v"), {"u": 1, "v": 2, "L": 1}) == 0.0
    assert eval_scalar(parse("exp(0)"), {}) == 1.0
    with pytest.raises(ExprDomainError):
        eval_scalar(parse("ln(x)"), {"x": -1.0})
    with pytest.raises(ExprDomainError):
        eval_scalar(parse("1/(x-1)"), {"x": 1.0})
    with pytest.raises(ExprDomainError):
        eval_scalar(parse("sqrt(x)"), {"x": -0.5})


def test_domain_error_names_subexpression():
    with pytest.raises(ExprDomainError) as info:
        eval_scalar(parse("1 + ln(x - 2)"), {"x": 1.0})
    assert "x - 2" in str(info.value)


def test_jet_polynomial_coefficient():
    j = eval_jet(parse("x^2*y"), (1.0, 2.0), ("x", "y"))
    assert j.coefficient((2, 1)) == 1.0
    assert j.derivative((2, 1)) == 2.0


def test_jet_exp_taylor():
    j = eval_jet(parse("exp(x)"), (0.0,), ("x",))
    assert np.allclose(j.coef, [1.0, 1.0, 0.5, 1.0 / 6.0], rtol=0, atol=1e-15)


def test_variable_jet_layout():
    sp = jet_space(3)
    assert sp.size == 1 + 3 + 6 + 10
    j = eval_jet(parse("y"), (1.0, 5.0, 2.0), ("x", "y", "z"))
    assert j.value == 5.0
    assert list(j.coef[1:4]) == [0.0, 1.0, 0.0]
    assert not np.any(j.coef[4:])


def test_parameters_are_constants():
    j = eval_jet(parse("L*u"), (2.0,), ("u",), {"L": 3.0})
    assert j.value == 6.0 and j.derivative((1,)) == 3.0 and j.derivative((2,)) == 0.0


@pytest.mark.parametrize("text", ["exp(x)*sin(y)", "v/u^2 - L*u*v", "sqrt(1 + x^2)"])
def test_zero_variable_jet_equals_scalar(text):
    env = {"x": 0.3, "y": 1.1, "u": 1.3, "v": 0.7, "L": 1.0}
    assert eval_jet(parse(text), (), (), env).value == eval_scalar(parse(text), env)


def test_fd_oracle_examples():
    assert fd_oracle(parse("x^3"), (2.0,), (3,)) == pytest.approx(6.0, abs=1e-4)
    assert fd_oracle(parse("sin(x)"), (0.0,), (1,)) == pytest.approx(1.0, abs=1e-8)
    assert fd_oracle(parse("v/u^2"), (1.0, 1.0), (2, 0), ("u", "v")) == pytest.approx(6.0, abs=1e-3)


def test_faa_di_bruno_third_order():
    # (f o g)''' = f''' g'^3 + 3 f'' g' g'' + f' g''' for f = sin, g = x^2 + x
    x = 0.4
    g1, g2, g3 = 2 * x + 1, 2.0, 0.0
    a = x * x + x
    exact = -math.cos(a) * g1**3 - 3 * math.sin(a) * g1 * g2 + math.cos(a) * g3
    assert eval_jet(parse("sin(x^2 + x)"), (x,), ("x",)).derivative((3,)) == pytest.approx(exact, rel=1e-13)


# --- polynomials are reproduced exactly ---------------------------------------

EXPONENTS = [a for a in itertools.product(range(4), repeat=4) if sum(a) <= 3]
monomial = st.tuples(st.sampled_from([-5, -4, -3, -2, -1, 1, 2, 3, 4, 5]), st.sampled_from(EXPONENTS))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.lists(monomial, min_size=1, max_size=6),
       st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_polynomials_exact(n, terms, point):
    names = ["a", "b", "c", "d"][:n]
    terms = [(c, a[:n]) for c, a in terms]
    text = " + ".join(f"{c}*" + "*".join(f"{x}^{k}" for x, k in zip(names, a)) if any(a) else str(c)
                      for c, a in terms)
    jet = eval_jet(parse(text), point[:n], names)
    sp = jet.space
    for pos, exps in enumerate(sp.exponents):
        exact = 0.0
        for c, a in terms:
            if all(e <= k for e, k in zip(exps, a)):
                term = float(c)
                for e, k, p in zip(exps, a, point):
                    term *= math.comb(k, e) * p ** (k - e)
                exact += term
        assert jet.coef[pos] == pytest.approx(exact, rel=1e-12, abs=1e-12)


# --- printer round trip -------------------------------------------------------

leaves = st.one_of(st.sampled_from([Sym("x"), Sym("y"), Sym("k_2")]),
                   st.floats(0, 100, allow_nan=False).map(lambda v: Const(round(v, 3))))


def _tree(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda t: BinOp(*t)),
        st.tuples(children, st.sampled_from([2.0, 3.0, 0.5, -1.0])).map(lambda t: BinOp("^", t[0], Const(t[1]))),
        st.tuples(st.sampled_from(["exp", "ln", "sin", "cos", "sqrt"]), children).map(lambda t: Call(*t)),
    )


exprs = st.recursive(leaves, _tree, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_parse_print_roundtrip(e):
    once = parse(to_string(e))
    assert parse(to_string(once)) == once
    assert to_string(once) == to_string(e)


# --- jets against finite differences on catalog metrics -------------------------

def _multis(n):
    sp = jet_space(n)
    return [e for e, d in zip(sp.exponents, sp.degree) if d >= 1]


@pytest.mark.parametrize("name", catalog_list())
def test_catalog_components_match_fd(name):
    from geolin.systems import sample_points

    s = catalog_get(name).system
    m = s.metric
    # Fixed-step differences lose accuracy next to poles: use the sampled point
    # farthest (in guard value) from any singular set.
    p = max(sample_points(s, 50, 7),
            key=lambda q: min(abs(eval_scalar(g, s.env(q))) for g in s.all_guards()))
    exprs = [m.component(i, j) for i in range(m.dim) for j in range(i, m.dim)] + [s.potential]
    rng = random.Random(0)
    multis = _multis(m.dim)
    for e in exprs:
        jet = eval_jet(e, p, m.coords, m.params)
        for mu in rng.sample(multis, min(6, len(multis))):
            fd = fd_oracle(e, p, mu, m.coords, m.params)
            assert abs(jet.derivative(mu) - fd) <= 1e-5 * max(abs(fd), 1.0)
