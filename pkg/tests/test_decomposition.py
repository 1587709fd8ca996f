import numpy as np
import pytest

from cligdt.compact import RecourseEvaluator
from cligdt.decomposition import (BigMError, BigMPolicy, CCGOptions, Master, Subproblem, alternating_ascent,
                                  ccg_solve, dual_ranges, eta_lower_bound, write_round_log)
from cligdt.uncertainty import instantiate, vertices

from oracles import brute_vertices, robust_value_milp


@pytest.fixture(scope="module")
def small(small_case):
    U = instantiate(small_case.curves, 0.6, 0.8)
    return small_case.problem, U


@pytest.fixture(scope="module")
def reference(small):
    p, U = small
    return robust_value_milp(p, brute_vertices(U.nominal, U.lb, U.ub, U.budget))[0]


def worst_over_vertices(problem, U, x):
    ev = RecourseEvaluator(problem)
    return max(ev(x, u).value for u in brute_vertices(U.nominal, U.lb, U.ub, U.budget))


@pytest.mark.parametrize("engine", ["ccg", "pccg"])
def test_ccg_matches_brute_force(small, reference, engine):
    p, U = small
    ref = reference
    res = ccg_solve(p, U, engine, CCGOptions(eps=1e-4))
    assert res.converged
    assert res.value <= ref * (1 + 1e-6) + 1e-6
    assert res.upper >= ref * (1 - 1e-6) - 1e-6
    assert abs(res.value - ref) <= 1e-4 * abs(ref) + 1e-6
    # the incumbent's true worst case matches the reported upper bound
    q = worst_over_vertices(p, U, res.x)
    assert p.c1 @ res.x + q == pytest.approx(res.upper, rel=1e-6)


def test_subproblem_is_exact_at_fixed_x(small):
    p, U = small
    x = ccg_solve(p, U, "ccg", CCGOptions(eps=1e-3)).x
    sr = Subproblem(p, U).solve(x, gap=1e-9)
    assert sr.value == pytest.approx(worst_over_vertices(p, U, x), rel=1e-6, abs=1e-6)
    assert U.contains(sr.u, tol=1e-6)


def test_ascent_is_a_lower_bound(small):
    p, U = small
    x = ccg_solve(p, U, "ccg", CCGOptions(eps=1e-3)).x
    ev = RecourseEvaluator(p)
    a = alternating_ascent(p, U, x, [U.nominal], ev)
    assert a.value <= worst_over_vertices(p, U, x) + 1e-6
    assert a.value >= ev(x, U.nominal).value - 1e-9
    assert a.value == pytest.approx(ev(x, a.u).value)


def test_recourse_duals_inside_certified_ranges(small):
    p, U = small
    lo, hi = dual_ranges(p)
    assert np.all(lo <= hi)
    ev = RecourseEvaluator(p)
    x = ccg_solve(p, U, "ccg", CCGOptions(eps=1e-3)).x
    for u in vertices(U)[:30]:
        r = ev(x, u)
        assert r.pi @ p.rhs(x, u) == pytest.approx(r.value, rel=1e-6, abs=1e-6)
        fin = np.isfinite(hi)
        assert np.all(r.pi[fin] <= hi[fin] + 1e-6) and np.all(r.pi[fin] >= lo[fin] - 1e-6)


def test_eta_lower_bound_below_recourse(small):
    p, U = small
    lb = eta_lower_bound(p, U.lb, U.ub)
    x = ccg_solve(p, U, "ccg", CCGOptions(eps=1e-3)).x
    ev = RecourseEvaluator(p)
    assert all(lb <= ev(x, u).value + 1e-9 for u in vertices(U))


def test_tight_bigm_escalates_to_exact_value(small):
    p, U = small
    x = ccg_solve(p, U, "ccg", CCGOptions(eps=1e-3)).x
    ref = worst_over_vertices(p, U, x)
    sub = Subproblem(p, U, BigMPolicy(factor=10.0, max_escalations=8), scale={"pi": 0.05})
    sr = sub.solve(x, gap=1e-9)
    assert sr.escalations >= 1
    assert sr.value == pytest.approx(ref, rel=1e-6, abs=1e-6)


def test_tight_bigm_without_escalation_budget_fails(small):
    p, U = small
    x = ccg_solve(p, U, "ccg", CCGOptions(eps=1e-3)).x
    sub = Subproblem(p, U, BigMPolicy(max_escalations=0), scale={"pi": 0.05})
    with pytest.raises(BigMError):
        sub.solve(x, gap=1e-9)


def test_warm_cuts_do_not_hurt(small_case):
    p, c = small_case.problem, small_case.curves
    U1, U2 = instantiate(c, 0.5, 0.8), instantiate(c, 0.55, 0.8)
    r1 = ccg_solve(p, U1, "pccg")
    cold = ccg_solve(p, U2, "pccg")
    warm = ccg_solve(p, U2, "pccg", warm_cuts=r1.cuts)
    assert warm.iterations <= cold.iterations
    assert warm.value == pytest.approx(cold.value, rel=2 * 0.005)


def test_master_start_from(small):
    p, U = small
    m = Master(p)
    m.add_scenario(U.nominal)
    assert not m.add_scenario(U.nominal.copy())
    out = m.solve(1e-6)
    x = out.values[m.x]
    start = m.start_from(x, RecourseEvaluator(p))
    again = m.solve(1e-6, start=start)
    assert again.objective == pytest.approx(out.objective, rel=1e-6)


def test_round_log_csv(tmp_path, small):
    p, U = small
    res = ccg_solve(p, U, "ccg")
    path = tmp_path / "rounds.csv"
    write_round_log(res.rounds, path, U.alpha, "ccg")
    write_round_log(res.rounds, path, U.alpha, "ccg")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("alpha,engine,iteration")
    assert len(lines) == 1 + 2 * res.iterations


def test_bad_engine(small):
    p, U = small
    with pytest.raises(ValueError):
        ccg_solve(p, U, "benders")
