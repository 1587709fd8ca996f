import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cligdt.search import KEEP_LEFT, KEEP_RIGHT, fibonacci, fibonacci_search, plan, prune, select_interval

from oracles import fib_final_interval, golden_ratio_bound, largest_feasible_alpha

# nondecreasing test functions on [0, 1]
SYNTHETIC = [
    ("linear", lambda a: 10 * a, 4.0),
    ("quadratic", lambda a: a * a, 0.5),
    ("steep tail", lambda a: 1 / (1.05 - a), 5.0),
    ("step", lambda a: 0.0 if a < 0.37 else 1.0, 0.5),
    ("log", lambda a: math.log1p(20 * a), 2.0),
    ("plateau", lambda a: min(a, 0.6) + max(a - 0.8, 0) * 5, 0.6),
    ("cubic", lambda a: (a - 0.2) ** 3, 0.1),
    ("exp", lambda a: math.exp(3 * a), 7.0),
    ("all feasible", lambda a: a, 2.0),
    ("none feasible", lambda a: 1 + a, 0.5),
]


def test_fibonacci_numbers():
    assert fibonacci(8) == [1, 1, 2, 3, 5, 8, 13, 21, 34]


def test_plan_final_lengths():
    assert plan(8).final == Fraction(1, 21)
    assert float(plan(13).final) == pytest.approx(0.0043, abs=5e-5)
    for n in range(3, 20):
        assert float(plan(n).final) == pytest.approx(fib_final_interval(n))
    assert float(plan(12).final) == pytest.approx(golden_ratio_bound(12), rel=0.05)


def test_plan_rejects_tiny_n():
    with pytest.raises(ValueError):
        plan(1)


@pytest.mark.parametrize("name,f,budget", SYNTHETIC, ids=[s[0] for s in SYNTHETIC])
@pytest.mark.parametrize("n", [8, 13])
def test_search_error_within_final_bracket(name, f, budget, n):
    res = fibonacci_search(f, budget, n)
    ref = largest_feasible_alpha(f, budget)
    assert abs(res.alpha - ref) <= float(plan(n).final) + 1e-4
    assert res.evaluations <= n


@settings(max_examples=50, deadline=None)
@given(a0=st.floats(0.0, 1.0), slope=st.floats(0.1, 10.0), n=st.integers(3, 14))
def test_search_on_random_ramps(a0, slope, n):
    f = lambda a: slope * (a - a0)
    res = fibonacci_search(f, 0.0, n)
    assert res.alpha <= a0 + 1e-12
    assert a0 - res.alpha <= float(plan(n).final) + 1e-12
    lo, hi = res.bracket
    assert hi - lo == pytest.approx(float(plan(n).final))


def test_select_and_prune_rules():
    assert select_interval(1.0, 2.0, 3.0) == KEEP_RIGHT
    assert select_interval(1.0, 4.0, 3.0) == KEEP_LEFT
    assert select_interval(3.0, 4.0, 3.0) == KEEP_RIGHT
    assert select_interval(2.0, 1.9, 3.0) == KEEP_RIGHT
    assert prune(3.0, 2.0, KEEP_RIGHT) == KEEP_RIGHT
    assert prune(3.0, 4.0, KEEP_RIGHT) is None
    assert prune(3.0, 4.0, KEEP_LEFT) == KEEP_LEFT
    assert prune(3.0, 2.0, KEEP_LEFT) is None


def test_pruning_saves_evaluations():
    calls = {"on": 0, "off": 0}

    def counted(key):
        def f(a):
            calls[key] += 1
            return 10 * a
        return f

    on = fibonacci_search(counted("on"), 4.0, 8, use_pruning=True)
    off = fibonacci_search(counted("off"), 4.0, 8, use_pruning=False)
    assert on.alpha == off.alpha
    assert calls["on"] < calls["off"]
    assert on.pruned > 0


def test_non_monotone_values_turn_pruning_off(caplog):
    vals = iter([5.0, 1.0, 2.0, 3.0, 4.0, 6.0, 7.0, 8.0, 9.0])
    res = fibonacci_search(lambda a: next(vals), 4.5, 8)
    assert res.pruning_disabled
    assert "not monotone" in caplog.text


def test_infeasible_budget_flag():
    res = fibonacci_search(lambda a: 1.0 + a, 0.5, 8)
    assert res.alpha == 0.0 and res.infeasible_budget


def test_trace_shape():
    res = fibonacci_search(lambda a: a, 0.3, 8)
    rounds = sorted({r.round for r in res.trace})
    assert rounds == list(range(1, plan(8).rounds + 1))
    assert all(r.kept in (KEEP_LEFT, KEEP_RIGHT) for r in res.trace)
    assert np.all(np.diff(list(res.values)) > 0)
