"""Compact two-stage representation and recourse evaluation.

First stage:   A x (<=|=) b,  x_lb <= x <= x_ub, some x integer.
Second stage:  B1 x + B2 y + E u (>=|=) d,  y >= 0,  cost c2' y.

The uncertainty enters with a plus sign on the left-hand side, i.e. the
recourse set is ``{y >= 0 : B2 y >= d - B1 x - E u}`` with equality rows
flagged in ``eq``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .solver import INF, Model, Status, VarKind

FORMAT_VERSION = 1


class RecourseInfeasible(RuntimeError):
    """Relatively complete recourse was violated for some (x, u)."""

    def __init__(self, message: str, rows: list[tuple[str, float]]):
        super().__init__(message)
        self.rows = rows


@dataclass(frozen=True, eq=False)
class CompactTwoStageProblem:
    A: sp.csr_matrix
    b: np.ndarray
    a_eq: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    x_integer: np.ndarray
    c1: np.ndarray
    B1: sp.csr_matrix
    B2: sp.csr_matrix
    E: sp.csr_matrix
    d: np.ndarray
    eq: np.ndarray
    c2: np.ndarray
    x_names: tuple = ()
    y_names: tuple = ()
    u_names: tuple = ()
    row_names: tuple = ()
    y_shift: np.ndarray | None = None
    y_ub: np.ndarray | None = None
    free_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    penalty: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mx, nx = self.A.shape
        my, ny = self.B2.shape
        nu = self.E.shape[1]
        checks = [
            (self.b.shape == (mx,), "b"), (self.a_eq.shape == (mx,), "a_eq"),
            (self.x_lb.shape == (nx,), "x_lb"), (self.x_ub.shape == (nx,), "x_ub"),
            (self.x_integer.shape == (nx,), "x_integer"), (self.c1.shape == (nx,), "c1"),
            (self.B1.shape == (my, nx), "B1"), (self.E.shape == (my, nu), "E"),
            (self.d.shape == (my,), "d"), (self.eq.shape == (my,), "eq"), (self.c2.shape == (ny,), "c2"),
        ]
        for ok, what in checks:
            if not ok:
                raise ValueError(f"inconsistent dimension for {what}")
        if np.any(self.x_lb > self.x_ub):
            raise ValueError("x_lb exceeds x_ub")
        if self.y_shift is None:
            object.__setattr__(self, "y_shift", np.zeros(ny))
        if self.y_ub is None:
            object.__setattr__(self, "y_ub", np.full(ny, INF))
        if self.penalty is None:
            object.__setattr__(self, "penalty", np.zeros(ny, dtype=bool))
        if np.any(self.c2[self.penalty] < 0):
            raise ValueError("penalty variables must carry nonnegative second-stage cost")

    # dimensions
    @property
    def n_x(self) -> int:
        return self.A.shape[1]

    @property
    def n_y(self) -> int:
        return self.B2.shape[1]

    @property
    def n_u(self) -> int:
        return self.E.shape[1]

    @property
    def m_y(self) -> int:
        return self.B2.shape[0]

    @property
    def n_x_binary(self) -> int:
        return int(np.sum(self.x_integer & (self.x_lb >= 0) & (self.x_ub <= 1)))

    def first_stage_residual(self, x) -> np.ndarray:
        """Violation of A x (<=|=) b and the bounds, zero where satisfied."""
        x = np.asarray(x, dtype=float)
        r = self.A @ x - self.b
        viol = np.where(self.a_eq, np.abs(r), np.maximum(r, 0.0))
        bnd = np.maximum(self.x_lb - x, 0.0) + np.maximum(x - self.x_ub, 0.0)
        return np.concatenate([viol, bnd])

    def second_stage_residual(self, x, y, u) -> np.ndarray:
        r = self.B1 @ x + self.B2 @ y + self.E @ u - self.d
        return np.where(self.eq, np.abs(r), np.maximum(-r, 0.0))

    def rhs(self, x, u) -> np.ndarray:
        """Right-hand side ``d - B1 x - E u`` of the recourse rows."""
        return self.d - self.B1 @ np.asarray(x, dtype=float) - self.E @ np.asarray(u, dtype=float)

    def physical_y(self, y) -> np.ndarray:
        return np.asarray(y) + self.y_shift

    # -- serialization --------------------------------------------------

    def to_json(self) -> dict:
        def coo(m):
            m = sp.coo_matrix(m)
            return {"shape": list(m.shape), "row": m.row.tolist(), "col": m.col.tolist(), "val": m.data.tolist()}

        def vec(v):
            return np.asarray(v, dtype=float).tolist()

        return {
            "format": "cligdt-compact", "version": FORMAT_VERSION,
            "A": coo(self.A), "b": vec(self.b), "a_eq": self.a_eq.astype(int).tolist(),
            "x_lb": _encode_inf(self.x_lb), "x_ub": _encode_inf(self.x_ub),
            "x_integer": self.x_integer.astype(int).tolist(), "c1": vec(self.c1),
            "B1": coo(self.B1), "B2": coo(self.B2), "E": coo(self.E), "d": vec(self.d),
            "eq": self.eq.astype(int).tolist(), "c2": vec(self.c2),
            "y_shift": vec(self.y_shift), "y_ub": _encode_inf(self.y_ub),
            "free_pairs": np.asarray(self.free_pairs).tolist(), "penalty": self.penalty.astype(int).tolist(),
            "x_names": [list(n) for n in self.x_names], "y_names": [list(n) for n in self.y_names],
            "u_names": [list(n) for n in self.u_names], "row_names": list(self.row_names),
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CompactTwoStageProblem":
        if data.get("format") != "cligdt-compact":
            raise ValueError("not a compiled problem file")

        def mat(d):
            return sp.csr_matrix((d["val"], (d["row"], d["col"])), shape=tuple(d["shape"]))

        arr = lambda k: np.asarray(data[k], dtype=float)  # noqa: E731
        return cls(
            A=mat(data["A"]), b=arr("b"), a_eq=np.asarray(data["a_eq"], dtype=bool),
            x_lb=_decode_inf(data["x_lb"]), x_ub=_decode_inf(data["x_ub"]),
            x_integer=np.asarray(data["x_integer"], dtype=bool), c1=arr("c1"),
            B1=mat(data["B1"]), B2=mat(data["B2"]), E=mat(data["E"]), d=arr("d"),
            eq=np.asarray(data["eq"], dtype=bool), c2=arr("c2"),
            x_names=tuple(tuple(n) for n in data["x_names"]), y_names=tuple(tuple(n) for n in data["y_names"]),
            u_names=tuple(tuple(n) for n in data["u_names"]), row_names=tuple(data["row_names"]),
            y_shift=arr("y_shift"), y_ub=_decode_inf(data["y_ub"]),
            free_pairs=np.asarray(data["free_pairs"], dtype=int).reshape(-1, 2),
            penalty=np.asarray(data["penalty"], dtype=bool), meta=data.get("meta", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "CompactTwoStageProblem":
        return cls.from_json(json.loads(Path(path).read_text()))


def _encode_inf(v):
    return [("inf" if a > 0 else "-inf") if np.isinf(a) else float(a) for a in np.asarray(v, dtype=float)]


def _decode_inf(v):
    return np.array([float(a) for a in v], dtype=float)


# -- recourse -------------------------------------------------------------

@dataclass
class RecourseResult:
    value: float
    y: np.ndarray
    pi: np.ndarray | None = None  # row duals, >= 0 on inequality rows


def recourse_model(problem: CompactTwoStageProblem, x, u) -> tuple[Model, np.ndarray]:
    m = Model("min", name="recourse")
    y = m.add_vars(problem.n_y, 0.0, INF)
    sense = np.where(problem.eq, 1, 2)
    m.add_rows(problem.B2, sense, problem.rhs(x, u))
    m.set_objective(problem.c2)
    return m, y


class RecourseEvaluator:
    """Reusable recourse LP; only the right-hand side changes between calls."""

    def __init__(self, problem: CompactTwoStageProblem):
        self.problem = problem
        self.model, self.y = recourse_model(problem, np.zeros(problem.n_x), np.zeros(problem.n_u))
        self.rows = np.arange(problem.m_y)

    def __call__(self, x, u) -> RecourseResult:
        p = self.problem
        self.model.set_rhs(self.rows, p.rhs(x, u))
        out = self.model.solve()
        if out.status is Status.INFEASIBLE:
            rows = infeasibility_report(p, x, u)
            names = ", ".join(f"{n} ({v:.3g})" for n, v in rows[:5])
            raise RecourseInfeasible(f"recourse infeasible; most violated rows: {names}", rows)
        if out.status is not Status.OPTIMAL:
            raise RuntimeError(f"recourse LP ended with status {out.status.value}")
        return RecourseResult(out.objective, out.values[self.y], out.duals)


def recourse_value(problem: CompactTwoStageProblem, x, u) -> RecourseResult:
    """Solve ``min c2'y`` over the recourse set for a fixed (x, u)."""
    m, y = recourse_model(problem, x, u)
    out = m.solve()
    if out.status is Status.INFEASIBLE:
        rows = infeasibility_report(problem, x, u)
        names = ", ".join(f"{n} ({v:.3g})" for n, v in rows[:5])
        raise RecourseInfeasible(f"recourse infeasible; most violated rows: {names}", rows)
    if out.status is not Status.OPTIMAL:
        raise RuntimeError(f"recourse LP ended with status {out.status.value}")
    return RecourseResult(out.objective, out.values[y])


def infeasibility_report(problem: CompactTwoStageProblem, x, u, top: int = 10) -> list[tuple[str, float]]:
    """Phase-one LP: minimal total artificial slack needed per row."""
    m = Model("min", name="phase1")
    y = m.add_vars(problem.n_y)
    k = problem.m_y
    sp_ = m.add_vars(k)  # artificial slack added to the row
    sn = m.add_vars(k)   # artificial surplus (equality rows only)
    mat = sp.hstack([problem.B2, sp.identity(k), -sp.diags(problem.eq.astype(float))], format="csr")
    m.add_rows(mat, np.where(problem.eq, 1, 2), problem.rhs(x, u))
    m.set_objective((np.concatenate([sp_, sn]), np.ones(2 * k)))
    out = m.solve()
    viol = out.values[sp_] + out.values[sn]
    order = np.argsort(-viol)
    names = problem.row_names or tuple(f"row{i}" for i in range(k))
    return [(names[i], float(viol[i])) for i in order[:top] if viol[i] > 1e-9]


@dataclass
class RecourseCheck:
    samples: int
    feasible: int
    max_penalty: float
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.feasible == self.samples


def sample_first_stage(problem: CompactTwoStageProblem, rng: np.random.Generator) -> np.ndarray:
    """A feasible x from X obtained with a random linear objective."""
    m = Model("min", name="x-sampler")
    lb = np.where(np.isfinite(problem.x_lb), problem.x_lb, -1e6)
    ub = np.where(np.isfinite(problem.x_ub), problem.x_ub, 1e6)
    x = m.add_vars(problem.n_x, lb, ub)
    for i in np.flatnonzero(problem.x_integer):
        m.kind[i] = VarKind.INTEGER
    m.add_rows(problem.A, np.where(problem.a_eq, 1, 0), problem.b)
    m.set_objective(rng.normal(size=problem.n_x))
    out = m.solve(gap=1e-3)
    if not out.ok:
        raise RuntimeError(f"first-stage feasible set is empty or unbounded ({out.status.value})")
    return out.values[x]


def check_relatively_complete_recourse(problem: CompactTwoStageProblem, sample_count: int,
                                       u_low, u_high, seed: int = 0) -> RecourseCheck:
    """Sample (x, u) pairs and confirm every recourse LP is feasible.

    ``u_low``/``u_high`` give the global envelope to draw scenarios from; x is
    drawn by optimizing random objectives over the first-stage set, u uniformly
    in the envelope with a bias toward its corners.
    """
    rng = np.random.default_rng(seed)
    u_low = np.asarray(u_low, dtype=float)
    u_high = np.asarray(u_high, dtype=float)
    report = RecourseCheck(sample_count, 0, 0.0)
    xs = [sample_first_stage(problem, rng) for _ in range(min(sample_count, 8))]
    for s in range(sample_count):
        x = xs[s % len(xs)]
        if s % 2:
            u = np.where(rng.random(u_low.size) < 0.5, u_low, u_high)
        else:
            u = u_low + rng.random(u_low.size) * (u_high - u_low)
        try:
            res = recourse_value(problem, x, u)
        except RecourseInfeasible as exc:
            report.failures.append(exc.rows[0][0] if exc.rows else "unknown row")
            continue
        report.feasible += 1
        report.max_penalty = max(report.max_penalty, float(res.y[problem.penalty].sum()))
    return report


def scenario_program(problem: CompactTwoStageProblem, scenarios, mode: str = "max",
                     weights=None) -> tuple[Model, np.ndarray, int | None, list[np.ndarray]]:
    """Both stages with one recourse copy per scenario.

    ``mode='max'`` minimizes ``c1'x + eta`` with ``eta >= c2'y_s`` for every
    scenario (the robust counterpart over a finite set); ``mode='mean'``
    minimizes ``c1'x + sum_s w_s c2'y_s``.  Returns the model, the x ids, the
    eta id (None in mean mode) and the per-scenario y ids.
    """
    if mode not in ("max", "mean"):
        raise ValueError("mode must be 'max' or 'mean'")
    scenarios = [np.asarray(u, dtype=float) for u in scenarios]
    if not scenarios:
        raise ValueError("at least one scenario is required")
    m = Model("min", name=f"extensive-{mode}")
    x = m.add_vars(problem.n_x, problem.x_lb, problem.x_ub)
    for i in np.flatnonzero(problem.x_integer):
        m.kind[int(x[i])] = VarKind.INTEGER
    m.add_rows(problem.A, np.where(problem.a_eq, 1, 0), problem.b)
    sense = np.where(problem.eq, 1, 2)
    ys = []
    for u in scenarios:
        y = m.add_vars(problem.n_y)
        cols = np.concatenate([x, y])
        block = sp.hstack([problem.B1, problem.B2], format="csr")
        m.add_rows(_remap(block, cols, m.num_vars), sense, problem.d - problem.E @ u)
        ys.append(y)
    obj = np.zeros(m.num_vars + (1 if mode == "max" else 0))
    obj[x] = problem.c1
    eta = None
    if mode == "max":
        eta = m.add_var(-INF, INF)
        obj[eta] = 1.0
        for y in ys:
            m.add_constraint({int(eta): 1.0, **{int(j): -float(c) for j, c in zip(y, problem.c2) if c}}, ">=", 0.0)
    else:
        w = np.full(len(ys), 1.0 / len(ys)) if weights is None else np.asarray(weights, dtype=float)
        for wi, y in zip(w, ys):
            obj[y] += wi * problem.c2
    m.set_objective(obj)
    return m, x, eta, ys


def _remap(block: sp.spmatrix, cols: np.ndarray, n: int) -> sp.csr_matrix:
    """Columns of ``block`` relabelled to model variable ids ``cols`` in an ``n``-wide matrix."""
    coo = sp.coo_matrix(block)
    return sp.csr_matrix((coo.data, (coo.row, cols[coo.col])), shape=(coo.shape[0], n))
