import json
import math

import numpy as np
import pytest

from geolin.catalog import catalog_get, catalog_list
from geolin.classify import classify
from geolin.exprjet import to_string
from geolin.systems import (
    CANONICAL, INVERSE, SamplingError, SpecError, conformal_rescale, eisenhart_lift, flatten_1d,
    jacobi_eisenhart_lift, jacobi_metric, load, sample_points, serialize, symbolic_inverse,
)

SZ = {"name": "szekeres", "coordinates": ["u", "v"], "parameters": {"h": 0},
      "metric": [["0", "1"], ["1", "0"]], "potential": "v/u^2 - h",
      "domain": {"u": [0.5, 2], "v": [0.5, 2]}}


def test_load_szekeres():
    s = load(SZ)
    assert s.dim == 2 and s.coords == ("u", "v") and s.params == {"h": 0.0}
    assert s.V((1.0, 2.0)) == 2.0
    assert load(json.dumps(SZ)).name == "szekeres"


def test_asymmetric_metric_error():
    doc = dict(SZ, metric=[["0", "1"], ["2", "0"]])
    with pytest.raises(SpecError) as info:
        load(doc)
    assert ("$.metric[1][0]", "metric not symmetric at (u,v)") in info.value.errors


def test_unknown_symbol_error():
    with pytest.raises(SpecError) as info:
        load(dict(SZ, potential="m*v/u^2"))
    (path, msg), = info.value.errors
    assert path == "$.potential" and "'m'" in msg


@pytest.mark.parametrize("patch, path", [
    ({"domain": {"u": [1, 0], "v": [0, 1]}}, "$.domain.u"),
    ({"coordinates": ["u", "N"], "domain": {"u": [0, 1], "N": [0, 1]}}, "$"),
    ({"potential": "exp(u"}, "$.potential"),
])
def test_schema_errors_carry_paths(patch, path):
    with pytest.raises(SpecError) as info:
        load(dict(SZ, **patch))
    assert path in [p for p, _ in info.value.errors]


def test_missing_field():
    doc = dict(SZ)
    del doc["potential"]
    with pytest.raises(SpecError):
        load(doc)


def test_jacobi_metric_conventions():
    s = load(SZ)
    can = jacobi_metric(s, CANONICAL)
    assert can.values((1.5, 0.7))[0, 1] == pytest.approx(0.7 / 1.5**2)
    assert to_string(can.component(0, 1)) == "v/u^2 - h"
    inv = jacobi_metric(s, INVERSE)
    assert inv.values((1.5, 0.7))[0, 1] == pytest.approx(1.5**2 / 0.7)
    const = load(dict(SZ, potential="3"))
    assert np.allclose(jacobi_metric(const).values((1, 1)), 3 * const.metric.values((1, 1)))
    osc = catalog_get("oscillator-corrections").system
    printed = catalog_get("oscillator-corrections-printed-jacobi").system.metric
    for p in sample_points(osc, 5, 0):
        assert np.allclose(jacobi_metric(osc, INVERSE).values(p), -printed.values(p), rtol=1e-14)


def test_eisenhart_lift_components():
    s = load(SZ)
    lift = eisenhart_lift(s)
    assert lift.coords == ("u", "v", "z")
    assert lift.values((2.0, 0.5, 0.0))[2, 2] == pytest.approx(8.0)
    e = catalog_get("exponential-interaction").system
    for q1, q2 in [(0.2, -0.3), (-0.5, 0.5)]:
        assert eisenhart_lift(e).values((q1, q2, 0))[2, 2] == pytest.approx(math.exp(-(q1 - q2)))
    rn = catalog_get("reissner-nordstrom").system
    assert eisenhart_lift(rn, "psi").values((1.5, 1.0, 0.0, 0.0))[3, 3] == pytest.approx(-1 / 3.0)
    with pytest.raises(ValueError):
        eisenhart_lift(s, "u")


def test_jacobi_eisenhart_lift_components():
    s = load(SZ)
    m = jacobi_eisenhart_lift(s, CANONICAL)
    g = m.values((1.2, 0.9, 0.0))
    assert g[0, 1] == pytest.approx(0.9 / 1.44) and g[2, 2] == 1.0 and g[0, 2] == 0.0
    osc = catalog_get("oscillator-corrections").system
    printed = catalog_get("oscillator-corrections-printed-jacobi").system
    for p in sample_points(osc, 5, 1):
        a = jacobi_eisenhart_lift(osc, INVERSE).values(p + (0.0,))
        b = eisenhart_lift(printed).values(p + (0.0,))
        assert np.allclose(a[:2, :2], -b[:2, :2]) and a[2, 2] == b[2, 2] == 1.0


@pytest.mark.parametrize("name", catalog_list())
def test_lift_identity(name):
    s = catalog_get(name).system
    a = eisenhart_lift(s)
    b = conformal_rescale(jacobi_eisenhart_lift(s, CANONICAL), f"1/({to_string(s.potential)})")
    for p in sample_points(s, 20, 5):
        x = p + (0.3,)
        ga, gb = a.values(x), b.values(x)
        assert np.max(np.abs(ga - gb)) <= 1e-12 * np.max(np.abs(ga))


def test_conformal_rescale_examples():
    s = load(SZ)
    m = eisenhart_lift(s)
    p = (1.1, 0.6, 0.0)
    assert np.array_equal(conformal_rescale(m, "1").values(p), m.values(p))
    with pytest.raises(ValueError):
        conformal_rescale(m, "q")


@pytest.mark.parametrize("potential, domain, exact", [
    ("1", [0.5, 2.0], lambda q, q0: q - q0),
    ("exp(2*q)", [0.0, 1.0], lambda q, q0: math.exp(-q0) - np.exp(-q)),
    ("q^2", [1.0, 2.0], lambda q, q0: np.log(q / q0)),
])
def test_flatten_1d(potential, domain, exact):
    s = load({"name": "one", "coordinates": ["q"], "metric": [["1"]], "potential": potential,
              "domain": {"q": domain}})
    tr = flatten_1d(s)
    qs = np.linspace(*domain, 101)
    ys = tr.y(qs)
    assert np.max(np.abs(ys - exact(qs, domain[0]))) < 1e-9
    assert np.all(np.diff(ys) > 0)
    assert tr({"q": qs[7]})[0] == pytest.approx(ys[7])


def test_flatten_1d_rejects_sign_change():
    s = load({"name": "one", "coordinates": ["q"], "metric": [["1"]], "potential": "q",
              "domain": {"q": [-1, 1]}})
    with pytest.raises(ValueError):
        flatten_1d(s)


def test_sample_points_contract():
    s = load(SZ)
    a = sample_points(s, 5, 0)
    assert a == sample_points(s, 5, 0)
    assert len(a) == 5 and all(0.5 <= u <= 2 and 0.5 <= v <= 2 for u, v in a)
    assert sample_points(s, 12, 0)[:5] == a
    assert sample_points(s, 5, 1) != a


def test_sample_points_exhaustion_names_guard():
    s = load(dict(SZ, potential="0*v/u^2 - h"))
    with pytest.raises(SamplingError) as info:
        sample_points(s, 3, 0)
    assert "tightest guard `0*v/u^2 - h`" in str(info.value)


def test_round_trip_serialize():
    for name in catalog_list():
        s = catalog_get(name).system
        again = load(serialize(s))
        assert serialize(again) == serialize(s)
        assert load(serialize(again)).potential == s.potential


def test_symbolic_inverse():
    s = catalog_get("reissner-nordstrom").system
    inv = symbolic_inverse(s.metric)
    p = (1.3, 0.7, 0.2)
    env = s.env(p)
    from geolin.exprjet import eval_scalar
    num = np.array([[eval_scalar(e, env) for e in row] for row in inv])
    assert np.allclose(num, np.linalg.inv(s.metric.values(p)), rtol=1e-13)


def test_gauge_scaling_surrogate():
    c = 7.0
    s = load(SZ)
    scaled = load(dict(SZ, metric=[["0", "7"], ["7", "0"]], potential="7*(v/u^2 - h)"))
    p = (1.2, 0.8)
    assert np.allclose(jacobi_metric(scaled).values(p), c**2 * jacobi_metric(s).values(p))
    for h in (0.0, 1.0):
        assert classify(scaled.with_params(h=h), 20).decision == classify(s.with_params(h=h), 20).decision
