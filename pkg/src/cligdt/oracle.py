"""Brute-force reference solvers for small instances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compact import CompactTwoStageProblem, RecourseEvaluator, scenario_program
from .solver import Status
from .uncertainty import MAX_VERTEX_DIM, BoundCurves, GeneralizedSet, UncertaintyError, instantiate, vertices


class OracleDimensionError(UncertaintyError):
    pass


@dataclass
class OracleResult:
    value: float
    x: np.ndarray
    eta: float
    scenarios: np.ndarray


def extensive_solve(problem: CompactTwoStageProblem, uset: GeneralizedSet, gap: float = 1e-7,
                    scenarios=None, method: str = "lazy", tol: float = 1e-6) -> OracleResult:
    """Robust counterpart over the exact vertex set.

    ``method='full'`` writes one MILP with a recourse block per vertex.
    ``method='lazy'`` solves the same MILP over a growing subset of vertices,
    checking every vertex with a recourse LP until none exceeds eta; the
    optimum is the same, only the model stays small.
    """
    if scenarios is None:
        if uset.n_u > MAX_VERTEX_DIM:
            raise OracleDimensionError(
                f"oracle is limited to n_u <= {MAX_VERTEX_DIM}; this problem has n_u = {uset.n_u}")
        scenarios = vertices(uset)
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    if method == "full":
        model, x, eta, _ = scenario_program(problem, list(scenarios), mode="max")
        out = model.solve(gap=gap)
        if out.status is not Status.OPTIMAL:
            raise RuntimeError(f"extensive form ended with status {out.status.value}")
        return OracleResult(out.objective, out.values[x], float(out.values[eta]), scenarios)
    if method != "lazy":
        raise ValueError("method must be 'full' or 'lazy'")
    evaluate = RecourseEvaluator(problem)
    # start from the scenario closest to the forecast
    start = int(np.argmin(np.abs(scenarios - uset.nominal).sum(axis=1)))
    active = [start]
    while True:
        model, x, eta, _ = scenario_program(problem, list(scenarios[active]), mode="max")
        out = model.solve(gap=gap)
        if out.status is not Status.OPTIMAL:
            raise RuntimeError(f"extensive form ended with status {out.status.value}")
        xv, ev = out.values[x], float(out.values[eta])
        q = np.array([evaluate(xv, u).value for u in scenarios])
        worst = int(np.argmax(q))
        if q[worst] <= ev + tol * max(1.0, abs(ev)) or worst in active:
            return OracleResult(float(problem.c1 @ xv) + max(ev, float(q[worst])), xv, ev, scenarios)
        active.append(worst)


def grid_search_alpha(problem: CompactTwoStageProblem, curves: BoundCurves, gamma: float, budget: float,
                      step: float = 0.01, evaluate=None) -> tuple[float, dict]:
    """Largest grid alpha whose robust value stays within ``budget``.

    ``evaluate`` maps alpha to Lambda*(alpha); by default the extensive form.
    Returns (alpha, {alpha: value}); alpha is 0 when even alpha=0 is over budget.
    """
    if step < curves.step - 1e-12:
        raise ValueError("grid step must not be finer than the curve step")
    if evaluate is None:
        def evaluate(a):
            return extensive_solve(problem, instantiate(curves, a, gamma)).value
    values = {}
    best = 0.0
    for a in np.round(np.arange(0.0, 1.0 + 1e-9, step), 10):
        a = min(float(a), 1.0)
        values[a] = evaluate(a)
        if values[a] <= budget:
            best = a
    return best, values
