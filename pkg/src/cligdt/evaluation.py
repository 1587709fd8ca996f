"""Out-of-sample evaluation and the IGDT / stochastic-programming baselines."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compact import CompactTwoStageProblem, RecourseEvaluator, scenario_program
from .decomposition import CCGOptions
from .search import SolveReport, solve_cl_igdt
from .solver import Status
from .uncertainty import BoundCurves, GeneralizedSet, hit_and_run, instantiate

NOP_THRESHOLD = 1e-6


@dataclass
class EvaluationReport:
    first_stage: float
    second_stage: np.ndarray
    penalties: np.ndarray
    seed: int | None = None
    label: str = ""

    @property
    def scenarios(self) -> int:
        return int(self.second_stage.size)

    @property
    def mean(self) -> float:
        return float(np.mean(self.second_stage))

    @property
    def std(self) -> float:
        return float(np.std(self.second_stage))

    @property
    def nop(self) -> int:
        return int(np.sum(self.penalties > NOP_THRESHOLD))

    @property
    def total(self) -> float:
        return self.first_stage + self.mean

    def summary(self) -> dict:
        return {"label": self.label, "C_I": self.first_stage, "C_II_mean": self.mean, "C_II_std": self.std,
                "C_TOL": self.total, "NoP": self.nop, "scenarios": self.scenarios, "seed": self.seed}


def _recourse_batch(problem: CompactTwoStageProblem, x, scenarios):
    ev = RecourseEvaluator(problem)
    costs, pens = [], []
    for u in scenarios:
        r = ev(x, u)
        costs.append(r.value)
        pens.append(float(problem.physical_y(r.y)[problem.penalty].sum()))
    return costs, pens


def evaluate(problem: CompactTwoStageProblem, x, scenarios, seed: int | None = None, label: str = "",
             workers: int = 1) -> EvaluationReport:
    """Recourse cost and penalty activity of ``x`` on each scenario."""
    x = np.asarray(x, dtype=float)
    res = problem.first_stage_residual(x)
    if res.size and res.max() > 1e-5:
        raise ValueError(f"x violates the first-stage constraints by {res.max():.3g}")
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    if workers > 1 and len(scenarios) > 1:
        from concurrent.futures import ProcessPoolExecutor
        chunks = np.array_split(scenarios, min(workers, len(scenarios)))
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_recourse_batch, [problem] * len(chunks), [x] * len(chunks), chunks))
        costs = [c for part in parts for c in part[0]]
        pens = [q for part in parts for q in part[1]]
    else:
        costs, pens = _recourse_batch(problem, x, scenarios)
    return EvaluationReport(float(problem.c1 @ x), np.array(costs), np.array(pens), seed, label)


def sample_scenarios(uset: GeneralizedSet, count: int, seed: int) -> np.ndarray:
    return hit_and_run(uset, count, np.random.default_rng(seed))


@dataclass
class IgdtResult:
    delta: float
    x: np.ndarray
    report: SolveReport


def igdt_baseline(problem: CompactTwoStageProblem, nominal, horizon: int, budget: float, n: int = 8,
                  options: CCGOptions | None = None, engine: str = "pccg", step: float = 0.001) -> IgdtResult:
    """Largest symmetric horizon delta with robust cost within budget over boxes u~(1 -/+ delta)."""
    curves = BoundCurves.box_family(nominal, horizon, step)
    full = np.asarray(nominal).size / horizon
    rep = solve_cl_igdt(problem, curves, full, budget, n, engine, options)
    return IgdtResult(rep.alpha, rep.x, rep)


@dataclass
class TsspResult:
    x: np.ndarray
    objective: float
    samples: np.ndarray
    seed: int


def tssp_baseline(problem: CompactTwoStageProblem, uset: GeneralizedSet, count: int, seed: int = 0,
                  gap: float = 1e-4, samples=None, time_limit: float = float("inf")) -> TsspResult:
    """Sample-average two-stage program over uniform samples from the set."""
    if count < 1:
        raise ValueError("need at least one sample")
    if samples is None:
        samples = sample_scenarios(uset, count, seed)
    model, x, _, _ = scenario_program(problem, list(samples), mode="mean")
    out = model.solve(gap=gap, time_limit=time_limit)
    if out.status is not Status.OPTIMAL and not (out.status is Status.LIMIT and np.isfinite(out.objective)):
        raise RuntimeError(f"sample-average problem ended with status {out.status.value}")
    return TsspResult(out.values[x], out.objective, np.asarray(samples), seed)


@dataclass
class SweepRow:
    gamma: float
    alpha: float
    value: float
    infeasible_budget: bool
    evaluation: EvaluationReport
    inner_iterations: int = 0

    def as_dict(self) -> dict:
        e = self.evaluation
        return {"gamma": self.gamma, "alpha": self.alpha, "lambda": self.value, "C_I": e.first_stage,
                "C_II": e.mean, "C_TOL": e.total, "NoP": e.nop, "infeasible_budget": int(self.infeasible_budget)}


def gamma_sweep(problem: CompactTwoStageProblem, curves: BoundCurves, budget: float, gammas, scenarios,
                n: int = 8, options: CCGOptions | None = None, engine: str = "pccg", seed: int | None = None,
                ) -> list[SweepRow]:
    gammas = list(gammas)
    if not gammas:
        raise ValueError("gamma list is empty")
    rows, done = [], {}
    for g in gammas:
        if g not in done:
            rep = solve_cl_igdt(problem, curves, g, budget, n, engine, options)
            ev = evaluate(problem, rep.x, scenarios, seed, label=f"gamma={g}")
            done[g] = SweepRow(g, rep.alpha, rep.value, rep.infeasible_budget, ev, rep.inner_iterations[engine])
        rows.append(done[g])
    return rows


# -- report files ----------------------------------------------------------------------

TABLE3_FIELDS = ["method", "parameter", "value", "C_I", "C_II", "C_TOL", "NoP", "scenarios", "seed"]
TABLE4_FIELDS = ["gamma", "alpha", "lambda", "C_I", "C_II", "C_TOL", "NoP", "infeasible_budget"]


def write_table3(rows: list[tuple[str, str, float, EvaluationReport]], path) -> None:
    """Rows of (method, parameter name, parameter value, report)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE3_FIELDS)
        for method, pname, pval, rep in rows:
            w.writerow([method, pname, "" if pval is None else f"{pval:.4f}", f"{rep.first_stage:.2f}",
                        f"{rep.mean:.2f}", f"{rep.total:.2f}", rep.nop, rep.scenarios,
                        "" if rep.seed is None else rep.seed])


def write_table4(rows: list[SweepRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE4_FIELDS)
        w.writeheader()
        for r in rows:
            d = r.as_dict()
            for k in ("alpha",):
                d[k] = f"{d[k]:.4f}"
            for k in ("lambda", "C_I", "C_II", "C_TOL"):
                d[k] = f"{d[k]:.2f}"
            w.writerow(d)


def plot_data(curves: BoundCurves, alphas=(0.2, 0.4, 0.6, 0.8), components=None) -> dict:
    """Confidence bands per component and hour for external plotting."""
    names = curves.names or tuple(("u", k) for k in range(curves.n_u))
    idx = range(curves.n_u) if components is None else components
    out = {"alphas": list(alphas), "components": []}
    for k in idx:
        out["components"].append({
            "name": list(names[k]) if isinstance(names[k], tuple) else names[k],
            "nominal": float(curves.nominal[k]),
            "lb": [float(curves.at(a)[0][k]) for a in alphas],
            "ub": [float(curves.at(a)[1][k]) for a in alphas],
        })
    return out


def write_plot_data(curves: BoundCurves, path, alphas=(0.2, 0.4, 0.6, 0.8)) -> None:
    Path(path).write_text(json.dumps(plot_data(curves, alphas)))
