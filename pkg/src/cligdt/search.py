"""Fibonacci search over the confidence level with probe reuse and pruning.

Fibonacci numbers follow F[0] = F[1] = 1.  With n planned evaluations the
bracket lengths are I_k = F[n-k] / F[n-1] (I_1 = 1), so the final length is
1 / F[n-1]; n = 8 gives 1/21 and n = 13 gives 1/233.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from .compact import CompactTwoStageProblem
from .decomposition import CCGOptions, CCGResult, OptimalityCut, ccg_solve, eta_lower_bound
from .uncertainty import BoundCurves, instantiate

log = logging.getLogger(__name__)

KEEP_RIGHT = "right"
KEEP_LEFT = "left"


def fibonacci(n: int) -> list[int]:
    f = [1, 1]
    while len(f) < n + 1:
        f.append(f[-1] + f[-2])
    return f[:n + 1]


@dataclass(frozen=True)
class Plan:
    n: int
    fib: tuple
    lengths: tuple  # I_1 .. I_n as Fractions

    def length(self, k: int) -> Fraction:
        return self.lengths[k - 1]

    @property
    def final(self) -> Fraction:
        return self.lengths[-1]

    @property
    def rounds(self) -> int:
        return self.n - 2


def plan(n: int) -> Plan:
    if n < 2:
        raise ValueError("the search needs n >= 2")
    f = fibonacci(n)
    lengths = tuple(Fraction(f[n - k], f[n - 1]) for k in range(1, n + 1))
    return Plan(n, tuple(f), lengths)


def _eq(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(b))


def select_interval(value_left: float, value_right: float, budget: float, tol: float = 1e-9) -> str:
    """Keep the right part when both probes fit the budget (or one sits exactly on it)."""
    if _eq(value_left, budget, tol) or _eq(value_right, budget, tol):
        return KEEP_RIGHT
    # no ordering test between the two values: solver noise can make a
    # feasible right probe slightly cheaper than the left one
    if value_left < budget and value_right < budget:
        return KEEP_RIGHT
    return KEEP_LEFT


def prune(budget: float, known: float, side: str, tol: float = 1e-9) -> str | None:
    """Decide from one probe value when monotonicity makes the other redundant.

    ``side`` names the probe whose value is known ("left" or "right").
    """
    if side == KEEP_RIGHT and (known < budget or _eq(known, budget, tol)):
        return KEEP_RIGHT
    if side == KEEP_LEFT and known > budget and not _eq(known, budget, tol):
        return KEEP_LEFT
    return None


@dataclass
class TraceRow:
    round: int
    alpha: float
    engine: str
    value: float | None
    iterations: int | None
    gap: float | None
    kept: str
    pruned: bool = False
    reused: bool = False


@dataclass
class SearchResult:
    alpha: float
    value: float
    infeasible_budget: bool
    trace: list[TraceRow]
    evaluations: int
    bracket: tuple
    values: dict
    pruning_disabled: bool = False

    @property
    def pruned(self) -> int:
        return sum(r.pruned for r in self.trace)


def fibonacci_search(evaluate: Callable[[float], float], budget: float, n: int = 8, use_pruning: bool = True,
                     tol: float = 1e-9, monotone_tol: float = 0.0, engine: str = "",
                     on_round: Callable | None = None) -> SearchResult:
    """Largest alpha in [0, 1] with evaluate(alpha) <= budget, assuming evaluate is nondecreasing.

    ``evaluate`` is called at most n times; probe values are cached and reused.
    The result is the left end of the final bracket.
    """
    pl = plan(n)
    lo, hi = Fraction(0), Fraction(1)
    cache: dict[Fraction, float] = {}
    trace: list[TraceRow] = []
    pruning = use_pruning
    warned = False

    def value(a: Fraction, rnd: int) -> float:
        nonlocal pruning, warned
        if a in cache:
            return cache[a]
        v = float(evaluate(float(a)))
        cache[a] = v
        keys = sorted(cache)
        vals = [cache[k] for k in keys]
        scale = max(1.0, abs(budget)) if math.isfinite(budget) else max(1.0, max(abs(x) for x in vals))
        if any(v2 < v1 - monotone_tol * scale for v1, v2 in zip(vals, vals[1:])):
            if pruning:
                log.warning("round %d: probe values are not monotone in alpha; pruning turned off", rnd)
            pruning = False
            warned = True
        return v

    for k in range(1, pl.rounds + 1):
        step = pl.length(k + 1)
        a_left, a_right = hi - step, lo + step
        if a_left > a_right:
            a_left, a_right = a_right, a_left
        decision = None
        pruned_side = None
        if pruning and k > 1:
            if a_right in cache and a_left not in cache:
                decision = prune(budget, cache[a_right], KEEP_RIGHT, tol)
                pruned_side = KEEP_LEFT if decision else None
            elif a_left in cache and a_right not in cache:
                decision = prune(budget, cache[a_left], KEEP_LEFT, tol)
                pruned_side = KEEP_RIGHT if decision else None
        rows = []
        for side, a in ((KEEP_LEFT, a_left), (KEEP_RIGHT, a_right)):
            if pruned_side == side:
                rows.append(TraceRow(k, float(a), engine, None, None, None, "", pruned=True))
                continue
            reused = a in cache
            v = value(a, k)
            rows.append(TraceRow(k, float(a), engine, v, None, None, "", reused=reused))
        if decision is None:
            decision = select_interval(cache[a_left], cache[a_right], budget, tol)
        if decision == KEEP_RIGHT:
            lo = a_left
        else:
            hi = a_right
        for r in rows:
            r.kept = decision
        trace.extend(rows)
        if on_round is not None:
            on_round(k, rows, (float(lo), float(hi)))

    alpha = lo
    v_star = value(alpha, pl.rounds + 1) if alpha not in cache else cache[alpha]
    infeasible = alpha == 0 and v_star > budget and not _eq(v_star, budget, tol)
    return SearchResult(float(alpha), v_star, infeasible, trace, len(cache), (float(lo), float(hi)),
                        {float(k): v for k, v in sorted(cache.items())}, warned)


# -- CL-IGDT driver ---------------------------------------------------------------------

@dataclass
class EngineRun:
    """Per-alpha decomposition results of one engine."""
    engine: str
    results: dict = field(default_factory=dict)   # snapped alpha -> CCGResult
    pool: list = field(default_factory=list)      # carried dual points (pccg)
    wall_time: float = 0.0
    last_x: np.ndarray | None = None              # master warm start for the next probe

    @property
    def inner_iterations(self) -> int:
        return sum(r.iterations for r in self.results.values())


@dataclass
class SolveReport:
    alpha: float
    x: np.ndarray
    value: float
    budget: float
    gamma: float
    n: int
    eps: float
    engine: str
    infeasible_budget: bool
    search: SearchResult
    runs: dict
    wall_time: float
    final_interval: float

    @property
    def inner_iterations(self) -> dict:
        return {k: r.inner_iterations for k, r in self.runs.items()}

    def trace_rows(self) -> list[dict]:
        """One row per (round, probe, engine) in the layout of the search trace CSV."""
        rows = []
        for r in self.search.trace:
            engines = [self.engine] + [e for e in self.runs if e != self.engine]
            for e in engines:
                run = self.runs[e]
                res = None if r.pruned else run.results.get(_snap_key(r.alpha, run))
                rows.append({
                    "round": r.round, "alpha": r.alpha, "engine": e,
                    "value": "" if res is None else res.value,
                    "inner_iterations": "" if res is None or r.reused else res.iterations,
                    "gap": "" if res is None else res.gap,
                    "kept": r.kept, "status": "pruned" if r.pruned else ("reused" if r.reused else "solved"),
                })
        return rows


def _snap_key(alpha: float, run: EngineRun):
    for a, res in run.results.items():
        if abs(res.requested - alpha) < 1e-12:
            return a
    return None


def solve_cl_igdt(problem: CompactTwoStageProblem, curves: BoundCurves, gamma: float, budget: float,
                  n: int = 8, engine: str = "pccg", options: CCGOptions | None = None, shadow: str | None = None,
                  use_pruning: bool = True, round_log: str | Path | None = None) -> SolveReport:
    """Maximize the confidence level subject to the robust cost staying within ``budget``.

    With ``shadow`` set, a second engine evaluates the same probes for
    side-by-side comparison; the primary engine alone drives the search.
    """
    from .decomposition import write_round_log

    opt = options or CCGOptions()
    t0 = time.perf_counter()
    engines = [engine] + ([shadow] if shadow and shadow != engine else [])
    runs = {e: EngineRun(e) for e in engines}
    env = instantiate(curves, 1.0, max(gamma, 0.0))
    eta_lb = eta_lower_bound(problem, env.lb, env.ub)

    def evaluate(alpha: float) -> float:
        uset = instantiate(curves, alpha, gamma)
        out = None
        for e in engines:
            run = runs[e]
            ts = time.perf_counter()
            res = ccg_solve(problem, uset, e, opt, warm_cuts=run.pool if e == "pccg" else None, eta_lb=eta_lb,
                            x_start=run.last_x)
            run.last_x = res.x
            res.requested = alpha
            run.wall_time += time.perf_counter() - ts
            if e == "pccg":
                run.pool = res.cuts
            run.results[uset.alpha] = res
            if round_log is not None:
                write_round_log(res.rounds, round_log, uset.alpha, e)
            log.info("alpha=%.4f (grid %.3f) %s: value %.4f after %d iterations", alpha, uset.alpha, e,
                     res.value, res.iterations)
            if e == engine:
                out = res.value
        return out

    # values are lower bounds within eps of the truth; allow that slack in the monotonicity check
    sr = fibonacci_search(evaluate, budget, n, use_pruning, monotone_tol=2 * opt.eps, engine=engine)
    main = runs[engine]
    key = curves.snap(sr.alpha)
    best = main.results.get(key)
    x = best.x if best is not None else None
    return SolveReport(sr.alpha, x, sr.value, budget, gamma, n, opt.eps, engine, sr.infeasible_budget, sr, runs,
                       time.perf_counter() - t0, float(plan(n).final))


TRACE_FIELDS = ["round", "alpha", "engine", "value", "inner_iterations", "gap", "kept", "status"]


def write_trace(report: SolveReport, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        w.writeheader()
        for row in report.trace_rows():
            row = dict(row)
            for k in ("alpha", "value", "gap"):
                if row[k] != "":
                    row[k] = f"{row[k]:.6f}" if k != "gap" else f"{row[k]:.3e}"
            w.writerow(row)
