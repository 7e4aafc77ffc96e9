import pytest

from geolin.catalog import catalog_get


@pytest.fixture(scope="session")
def szekeres():
    return catalog_get("szekeres").system


@pytest.fixture(scope="session")
def szekeres_traj(szekeres):
    from geolin.dynamics import integrate, project_to_constraint

    qd = project_to_constraint(szekeres, (1.0, 1.0), (1.0, -1.0))
    return integrate(szekeres, (1.0, 1.0), qd, 0.5, 1e-3)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, line = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {line}")
