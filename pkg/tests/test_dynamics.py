import numpy as np
import pytest

from geolin.catalog import catalog_get
from geolin.dynamics import (
    ChargeSpec, ConstraintError, affine_check, apply_transform, charge_drift,
    eom_rhs, hamiltonian_expr, integrate, noether_charge_from_generator, null_lift_recover,
    on_shell_phase_points, poisson_bracket, project_to_constraint, straightness_residual,
    weak_noether_check,
)
from geolin.exprjet import ExprDomainError, eval_scalar, parse, to_string
from geolin.systems import Generator, Transform, load


@pytest.fixture(scope="module")
def free():
    return catalog_get("free-particle").system


def test_eom_free(free):
    assert not np.any(eom_rhs(free, (0.3, 0.1), (1.0, 2.0)))


def test_eom_szekeres(szekeres):
    assert np.allclose(eom_rhs(szekeres, (1.0, 1.0), (0.3, -0.2)), [-1.0, 2.0], atol=1e-15)


def test_eom_szekeres_lambda():
    s = catalog_get("szekeres-lambda").system
    assert np.allclose(eom_rhs(s, (1.0, 1.0), (0.0, 0.0)), [0.0, 3.0], atol=1e-15)


def test_projection_examples(szekeres, free):
    assert np.allclose(project_to_constraint(szekeres, (1.0, 1.0), (1.0, -1.0)), [1.0, -1.0])
    assert np.allclose(project_to_constraint(free, (0.0, 0.0), (1.0, 0.0)), [1.0, 0.0])
    pos = load({"name": "p", "coordinates": ["x", "y"], "metric": [["1", "0"], ["0", "1"]],
                "potential": "1", "domain": {"x": [-1, 1], "y": [-1, 1]}})
    with pytest.raises(ConstraintError, match="opposite signs"):
        project_to_constraint(pos, (0.0, 0.0), (0.3, 0.4))


def test_projection_lands_on_constraint(szekeres):
    for q, d in [((1.3, 0.7), (0.2, -1.0)), ((0.6, 1.9), (-1.0, 0.4))]:
        qd = project_to_constraint(szekeres, q, d)
        g = szekeres.metric.values(q)
        v = szekeres.V(q)
        assert abs(0.5 * qd @ g @ qd + v) <= 1e-14 * abs(v)


def test_free_particle_exact(free):
    tr = integrate(free, (0.0, 0.0), (1.0, 0.0), 0.5, 1e-3)
    assert np.max(np.abs(tr.q[:, 0] - tr.t)) < 1e-12
    assert np.allclose(np.diff(tr.t), 1e-3) and tr.t[-1] == pytest.approx(0.5)


def test_szekeres_constraint_preserved(szekeres_traj):
    assert np.max(np.abs(szekeres_traj.H)) < 1e-10
    assert szekeres_traj.truncated_at is None


def test_rk4_order(szekeres):
    qd = project_to_constraint(szekeres, (1.0, 1.0), (1.0, -1.0))
    ends = [integrate(szekeres, (1.0, 1.0), qd, 0.5, dt).q[-1] for dt in (0.02, 0.01, 0.005)]
    order = np.log2(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2]))
    assert 3.8 <= order <= 4.2


def test_halving_against_fine_reference(szekeres):
    qd = project_to_constraint(szekeres, (1.0, 1.0), (1.0, -1.0))
    ref = integrate(szekeres, (1.0, 1.0), qd, 0.5, 0.02 / 8).q[-1]
    e1 = np.linalg.norm(integrate(szekeres, (1.0, 1.0), qd, 0.5, 0.02).q[-1] - ref)
    e2 = np.linalg.norm(integrate(szekeres, (1.0, 1.0), qd, 0.5, 0.01).q[-1] - ref)
    assert 12 < e1 / e2 < 20


def test_truncation_on_domain_exit(free):
    tr = integrate(free, (0.0, 0.0), (1.0, 0.0), 2.0, 1e-2)
    assert 0.98 <= tr.truncated_at <= 1.0
    assert tr.q[-1, 0] <= 1.0


def test_initial_point_outside_domain(free):
    with pytest.raises(ExprDomainError):
        integrate(free, (5.0, 0.0), (1.0, 0.0), 0.1, 1e-2)


def test_jacobi_time(free):
    tr = integrate(free, (0.0, 0.0), (1.0, 0.0), 0.5, 1e-3)
    assert np.allclose(tr.tau, -0.5 * tr.t, atol=1e-15)


@pytest.mark.parametrize("I0", [1.0, -1.0])
def test_lift_recovery_szekeres(szekeres, I0):
    qd = project_to_constraint(szekeres, (1.0, 1.0), (1.0, -1.0))
    r = null_lift_recover(szekeres, I0, (1.0, 1.0), qd, 0.5, 1e-3)
    assert r.residual < 1e-8
    assert r.fiber_charge_drift < 1e-10


def test_lift_recovery_rejects_other_charge(szekeres):
    with pytest.raises(ValueError):
        null_lift_recover(szekeres, 2.0, (1.0, 1.0), (1.0, -1.0), 0.5, 1e-3)


def test_lift_recovery_free(free):
    r = null_lift_recover(free, -1.0, (0.0, 0.0), (1.0, 0.0), 0.5, 1e-3)
    assert r.residual < 1e-14


def test_apply_transform_examples(szekeres):
    tr = szekeres.transform("rectifier")
    assert np.allclose(tr({"u": 1.0, "v": 1.0}), [-1.0, 0.5])
    sl = catalog_get("szekeres-lambda").system
    assert np.allclose(sl.transform("rectifier")({"u": 1.0, "v": 1.0, "L": 1.0, "h": 0.0}), [-1.5, 0.5])


def test_identity_transform_columns(free):
    traj = integrate(free, (0.0, 0.0), (1.0, 0.0), 0.2, 1e-2)
    traj = apply_transform(free.transform("identity"), traj)
    assert np.array_equal(traj.columns["X"], traj.q[:, 0])


def test_apply_transform_domain_error_truncates(free):
    traj = integrate(free, (0.0, 0.0), (1.0, 0.0), 0.5, 1e-2)
    bad = Transform("bad", "jacobi-canonical", {"X": parse("ln(0.25 - x)"), "Y": parse("y")})
    out = apply_transform(bad, traj)
    assert out.truncated_at is not None and np.all(out.q[:, 0] < 0.25)
    assert len(out.columns["X"]) == len(out)


def test_straightness_examples(szekeres_traj, szekeres):
    t = np.linspace(0, 1, 20)
    assert straightness_residual(np.column_stack([t, 2 * t + 1])) < 1e-12
    traj = apply_transform(szekeres.transform("rectifier"), szekeres_traj)
    assert straightness_residual(np.column_stack([traj.columns["U"], traj.columns["V"]])) < 1e-6
    assert straightness_residual(traj.q) > 1e-2
    with pytest.raises(ValueError):
        straightness_residual(np.ones((5, 2)))


def test_affine_examples(szekeres_traj, szekeres, free):
    traj = apply_transform(szekeres.transform("rectifier"), szekeres_traj)
    assert affine_check(traj, ["U", "V"]) < 1e-6
    ftraj = apply_transform(free.transform("identity"), integrate(free, (0, 0), (1, 0), 0.5, 1e-3))
    assert affine_check(ftraj, ["X", "Y"]) < 1e-12
    traj.columns["u_raw"], traj.columns["v_raw"] = traj.q[:, 0], traj.q[:, 1]
    assert affine_check(traj, ["u_raw", "v_raw"]) > 1e-2


def test_noether_charges_szekeres(szekeres):
    forms = [to_string(noether_charge_from_generator(szekeres, g).expr) for g in szekeres.generators]
    env = {"u": 1.3, "v": 0.7, "p_u": 0.2, "p_v": -0.4, "h": 0.0}
    vals = [eval_scalar(parse(f), env) for f in forms]
    assert vals == pytest.approx([0.4 / 0.7, -1.3**2 * 0.2, -(2 * 1.3 * 0.2 + 0.7 * -0.4)])


def test_energy_generator_gives_hamiltonian(szekeres):
    gen = Generator("T", parse("1"), {})
    ch = noether_charge_from_generator(szekeres, gen)
    env = {"u": 1.3, "v": 0.7, "p_u": 0.2, "p_v": -0.4, "h": 0.0}
    assert eval_scalar(ch.expr, env) == pytest.approx(eval_scalar(hamiltonian_expr(szekeres), env))
    assert eval_scalar(ch.expr, env) == pytest.approx(0.2 * -0.4 + 0.7 / 1.69)


def test_charge_drift_examples(szekeres, szekeres_traj):
    phi1 = ChargeSpec("pv/v", parse("p_v/v"))
    d = charge_drift(szekeres, phi1, szekeres_traj)
    assert d["initial"] == pytest.approx(1.0) and d["max_drift"] < 1e-7
    assert charge_drift(szekeres, ChargeSpec("u2pu", parse("u^2*p_u")), szekeres_traj)["max_drift"] < 1e-7
    assert charge_drift(szekeres, ChargeSpec("u", parse("u")), szekeres_traj)["normalized"] > 1e-2


def test_weak_noether_examples(szekeres):
    w = weak_noether_check(szekeres, ChargeSpec("d", parse("v*p_v + 2*u*p_u")), 30, 0)
    assert w["on_shell_max"] < 1e-9 and w["chi"] == pytest.approx(3.0, abs=1e-6) and w["fit_residual"] < 1e-9
    wh = weak_noether_check(szekeres, ChargeSpec("H", hamiltonian_expr(szekeres)), 30, 0)
    assert wh["on_shell_max"] < 1e-12 and wh["chi"] == 0.0
    wu = weak_noether_check(szekeres, ChargeSpec("u", parse("u")), 30, 0)
    assert wu["on_shell_max"] > 1e-2 and wu["chi"] is None


def test_poisson_antisymmetry(szekeres):
    phi = ChargeSpec("d", parse("v*p_v + 2*u*p_u + u^2*p_u*v"))
    for q, p in on_shell_phase_points(szekeres, 20, 4):
        a, _ = poisson_bracket(szekeres, phi, q, p)
        b, _ = poisson_bracket(szekeres, phi, q, p, reverse=True)
        assert abs(a + b) <= 1e-12 * max(1.0, abs(a))


def test_csv_layout(szekeres, szekeres_traj):
    traj = apply_transform(szekeres.transform("rectifier"), szekeres_traj)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,u,v,u_dot,v_dot,H,tau,U,V"
    assert len(lines) == len(traj) + 1
    assert float(lines[1].split(",")[1]) == 1.0


def test_csv_truncation_comment(free):
    tr = integrate(free, (0.0, 0.0), (1.0, 0.0), 2.0, 0.25)
    text = tr.to_csv()
    assert text.splitlines()[-1] == "# truncated_at=1"


def test_horizon_not_multiple_of_dt(free):
    with pytest.raises(ValueError, match="whole number"):
        integrate(free, (0.0, 0.0), (1.0, 0.0), 0.5, 0.3)
