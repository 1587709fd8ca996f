"""Solver wrapper, compact two-stage form and network compilation."""
import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog, milp, LinearConstraint, Bounds

from cligdt.compact import (CompactTwoStageProblem, RecourseEvaluator, RecourseInfeasible,
                            check_relatively_complete_recourse, recourse_value, scenario_program)
from cligdt.instances import ieee33, six_bus, two_bus
from cligdt.network import (DataError, Line, compile_network, deterministic_baseline, load_forecast, load_history,
                            load_network, network_from_json, network_to_json, nominal_vector, save_forecast,
                            save_network, uncertain_components)
from cligdt.solver import Model, Status, VarKind


# -- solver ---------------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), integer=st.booleans())
def test_model_matches_scipy(seed, integer):
    rng = np.random.default_rng(seed)
    n, m = 5, 4
    A = rng.uniform(-1, 2, (m, n))
    b = A @ rng.uniform(0, 3, n) + 1.0
    c = rng.uniform(-2, 1, n)
    model = Model("min")
    x = model.add_vars(n, 0.0, 5.0, kind=VarKind.INTEGER if integer else VarKind.CONTINUOUS)
    model.add_rows(sp.csr_matrix(A), "<=", b)
    model.set_objective(c)
    out = model.solve(gap=1e-9)
    ref = milp(c, constraints=LinearConstraint(A, -np.inf, b), integrality=np.full(n, int(integer)),
               bounds=Bounds(0, 5))
    assert out.status is Status.OPTIMAL
    assert out.objective == pytest.approx(ref.fun, rel=1e-7, abs=1e-7)
    assert np.all(A @ out.values[x] <= b + 1e-7)


def test_model_rhs_update_and_duals():
    m = Model("min")
    x = m.add_vars(2)
    rows = m.add_rows(sp.csr_matrix([[1.0, 1.0]]), ">=", [3.0])
    m.set_objective([1.0, 2.0])
    assert m.solve().objective == pytest.approx(3.0)
    m.set_rhs(rows, [5.0])
    out = m.solve()
    assert out.objective == pytest.approx(5.0)
    assert out.duals[0] == pytest.approx(1.0)


def test_model_infeasible_status():
    m = Model("min")
    m.add_vars(1, 0.0, 1.0)
    m.add_rows(sp.csr_matrix([[1.0]]), ">=", [2.0])
    m.set_objective([1.0])
    assert m.solve().status is Status.INFEASIBLE


def test_model_rejects_bad_bounds():
    with pytest.raises(ValueError):
        Model("min").add_vars(1, 2.0, 1.0)


# -- compact form ------------------------------------------------------------------------

def test_recourse_value_matches_linprog(six_bus_case):
    p, u0 = six_bus_case.problem, six_bus_case.nominal
    _, x = deterministic_baseline(p, u0)
    h = p.rhs(x, u0)
    A_ub = -p.B2[~p.eq]
    ref = linprog(p.c2, A_ub=A_ub, b_ub=-h[~p.eq], A_eq=p.B2[p.eq], b_eq=h[p.eq], bounds=(0, None),
                  method="highs")
    r = RecourseEvaluator(p)(x, u0)
    assert r.value == pytest.approx(ref.fun, rel=1e-7)
    # strong duality with the returned row duals
    assert r.pi @ h == pytest.approx(r.value, rel=1e-7)
    assert np.all(r.pi[~p.eq] >= -1e-9)


def test_json_roundtrip(tmp_path, six_bus_case):
    p = six_bus_case.problem
    p.save(tmp_path / "p.json")
    q = CompactTwoStageProblem.load(tmp_path / "p.json")
    for name in ("A", "B1", "B2", "E"):
        assert abs(getattr(p, name) - getattr(q, name)).max() == 0
    for name in ("b", "d", "c1", "c2", "x_lb", "x_ub", "y_shift", "y_ub"):
        np.testing.assert_array_equal(getattr(p, name), getattr(q, name))
    assert q.u_names == p.u_names


def test_relatively_complete_recourse(six_bus_case):
    U_lo, U_hi = six_bus_case.curves.at(1.0)
    chk = check_relatively_complete_recourse(six_bus_case.problem, 20, U_lo, U_hi, seed=0)
    assert chk.ok


def test_recourse_without_slacks_can_fail():
    net, fc = two_bus(2)
    p, _ = compile_network(net, fc, slacks=False)
    u = nominal_vector(net, fc).copy()
    u[2:] *= 10  # ten times the load
    _, x = deterministic_baseline(*compile_network(net, fc)[:1], nominal_vector(net, fc))
    with pytest.raises(RecourseInfeasible) as err:
        recourse_value(p, x, u)
    assert err.value.rows


def test_scenario_program_max_is_worst(six_bus_case):
    p, u0 = six_bus_case.problem, six_bus_case.nominal
    hi = u0 * 1.1
    model, x, eta, _ = scenario_program(p, [u0, hi], mode="max")
    out = model.solve(gap=1e-8)
    xv = out.values[x]
    ev = RecourseEvaluator(p)
    assert out.values[eta] == pytest.approx(max(ev(xv, u0).value, ev(xv, hi).value), rel=1e-6)


# -- network ----------------------------------------------------------------------------

def test_uncertain_order_pv_first():
    net, fc = six_bus(6)
    comps = uncertain_components(net, fc)
    kinds = [c.series for c in comps]
    assert kinds == sorted(kinds, key=lambda s: s != "pv")
    assert nominal_vector(net, fc).size == len(comps) * net.horizon


def test_network_json_roundtrip(tmp_path):
    net, fc = six_bus(6)
    save_network(net, tmp_path / "n.json")
    save_forecast(fc, tmp_path / "f.csv")
    net2 = load_network(tmp_path / "n.json")
    fc2 = load_forecast(tmp_path / "f.csv", net2.n_buses)
    p1, _ = compile_network(net, fc)
    p2, _ = compile_network(net2, fc2)
    assert abs(p1.B2 - p2.B2).max() == 0
    np.testing.assert_allclose(p1.d, p2.d, rtol=1e-6)


@pytest.mark.parametrize("mutate,msg", [
    (lambda d: d["lines"].append({"parent": 1, "child": 2, "r": 0.1, "x": 0.1}), "radial"),
    (lambda d: d["dgs"][0].update(bus=0), "root"),
    (lambda d: d["esss"][0].update(eta=1.5), "efficiency"),
    (lambda d: d["lines"][1].update(child=9), "unknown"),
])
def test_network_validation(mutate, msg):
    net, _ = six_bus(6)
    data = network_to_json(net)
    mutate(data)
    with pytest.raises(DataError, match=msg):
        network_from_json(data).validate()


def test_forecast_csv_errors(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("bus,series,t1,t2\n1,wind,1,2\n")
    with pytest.raises(DataError, match="row 2"):
        load_forecast(p, 3)
    p.write_text("bus,series,t1,t3\n1,pv,1,2\n")
    with pytest.raises(DataError, match="t1..tT"):
        load_forecast(p, 3)
    p.write_text("sample,bus,series,t1\n0,1,load,x\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_history(p)


def test_more_load_costs_more():
    net, fc = two_bus(2)
    p, _ = compile_network(net, fc)
    u0 = nominal_vector(net, fc)
    _, x = deterministic_baseline(p, u0)
    ev = RecourseEvaluator(p)
    vals = []
    for s in (0.9, 1.0, 1.2, 1.6):
        u = u0.copy()
        u[2:] *= s  # load coordinates follow the PV ones
        vals.append(ev(x, u).value)
    assert np.all(np.diff(vals) >= -1e-9)


def test_deterministic_has_no_penalties():
    net, fc = six_bus(6)
    p, _ = compile_network(net, fc)
    u0 = nominal_vector(net, fc)
    cost, x = deterministic_baseline(p, u0)
    r = RecourseEvaluator(p)(x, u0)
    assert p.physical_y(r.y)[p.penalty].sum() == pytest.approx(0.0, abs=1e-6)
    assert cost == pytest.approx(p.c1 @ x + r.value, rel=1e-6)


def test_ieee33_dimensions():
    net, fc = ieee33(24)
    net.validate()
    assert net.n_buses == 33 and len(net.lines) == 32
    assert len(uncertain_components(net, fc)) == 5 + 32
