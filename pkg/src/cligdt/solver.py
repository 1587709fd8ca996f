"""Thin wrapper around HiGHS for the LP/MILP models built by the rest of the package.

A :class:`Model` is an append-only container: variables and rows can be added
after a solve and the next :meth:`Model.solve` pushes only the new pieces to the
underlying HiGHS instance, which keeps warm information around between C&CG
iterations.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import highspy
import numpy as np
import scipy.sparse as sp

INF = float("inf")
FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-6


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"


class SolverError(RuntimeError):
    """Raised for solver failures that callers cannot recover from."""


_SENSE_CODES = {"<=": 0, "=": 1, ">=": 2, "==": 1, "L": 0, "E": 1, "G": 2}


def _sense_array(sense, n: int) -> np.ndarray:
    if isinstance(sense, str):
        return np.full(n, _SENSE_CODES[sense], dtype=np.int8)
    return np.array([_SENSE_CODES[s] if isinstance(s, str) else int(s) for s in sense], dtype=np.int8)


@dataclass
class SolveOutcome:
    status: Status
    objective: float
    bound: float
    values: np.ndarray
    duals: np.ndarray | None
    wall_time: float
    mip_gap: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, ids) -> np.ndarray:
        return self.values[ids]


@dataclass
class Model:
    """Linear model with continuous, binary and integer columns.

    Rows are stored as sparse blocks in the order they were added. Row ids and
    variable ids are plain integers (positions), so callers keep numpy index
    arrays around instead of symbolic handles.
    """

    sense: str = "min"
    name: str = "model"
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    kind: list = field(default_factory=list)
    names: list = field(default_factory=list)

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError(f"objective sense must be 'min' or 'max', got {self.sense!r}")
        self._nvar = 0
        self._row_blocks: list[tuple[sp.csr_matrix, np.ndarray, np.ndarray]] = []
        self._nrow = 0
        self._cost = np.zeros(0)
        self._offset = 0.0
        self._highs: highspy.Highs | None = None
        self._pushed_cols = 0
        self._pushed_rows = 0
        self._pushed_blocks = 0
        self._dirty_bounds: dict[int, tuple[float, float]] = {}
        self._dirty_rows: dict[int, tuple[int, float]] = {}

    # -- construction -------------------------------------------------

    @property
    def num_vars(self) -> int:
        return self._nvar

    @property
    def num_rows(self) -> int:
        return self._nrow

    @property
    def has_integers(self) -> bool:
        return any(k is not VarKind.CONTINUOUS for k in self.kind)

    def add_vars(self, n: int, lb=0.0, ub=INF, kind: VarKind | str = VarKind.CONTINUOUS,
                 names: Sequence[str] | str | None = None) -> np.ndarray:
        kind = VarKind(kind)
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
        if kind is VarKind.BINARY:
            lb = np.maximum(lb, 0.0)
            ub = np.minimum(ub, 1.0)
        if np.any(lb > ub):
            bad = int(np.argmax(lb > ub))
            raise ValueError(f"variable {self._nvar + bad}: lower bound {lb[bad]} exceeds upper bound {ub[bad]}")
        if isinstance(names, str):
            names = [f"{names}[{k}]" for k in range(n)]
        ids = np.arange(self._nvar, self._nvar + n)
        self.lb.extend(lb.tolist())
        self.ub.extend(ub.tolist())
        self.kind.extend([kind] * n)
        self.names.extend(names if names is not None else [f"v{i}" for i in ids])
        self._cost = np.concatenate([self._cost, np.zeros(n)])
        self._nvar += n
        return ids

    def add_var(self, lb=0.0, ub=INF, kind: VarKind | str = VarKind.CONTINUOUS, name: str | None = None) -> int:
        return int(self.add_vars(1, lb, ub, kind, [name] if name else None)[0])

    def set_bounds(self, ids, lb, ub) -> None:
        ids = np.atleast_1d(np.asarray(ids))
        lb = np.broadcast_to(np.asarray(lb, dtype=float), ids.shape)
        ub = np.broadcast_to(np.asarray(ub, dtype=float), ids.shape)
        for i, lo, hi in zip(ids.tolist(), lb.tolist(), ub.tolist()):
            if lo > hi:
                raise ValueError(f"variable {i}: lower bound {lo} exceeds upper bound {hi}")
            self.lb[i], self.ub[i] = lo, hi
            if i < self._pushed_cols:
                self._dirty_bounds[i] = (lo, hi)

    def add_rows(self, matrix, sense, rhs) -> np.ndarray:
        """Append rows ``matrix @ v (sense) rhs``; matrix columns index variable ids."""
        m = sp.csr_matrix(matrix, dtype=float)
        k = m.shape[0]
        if m.shape[1] > self._nvar:
            if m[:, self._nvar:].nnz:
                raise ValueError("constraint references an undeclared variable")
            m = m[:, :self._nvar]
        if m.shape[1] < self._nvar:
            m = sp.csr_matrix((m.data, m.indices, m.indptr), shape=(k, self._nvar))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (k,)).copy()
        self._row_blocks.append((m, _sense_array(sense, k), rhs))
        ids = np.arange(self._nrow, self._nrow + k)
        self._nrow += k
        return ids

    def add_constraint(self, coeffs: Mapping[int, float], sense: str, rhs: float) -> int:
        cols = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
        vals = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        if cols.size and (cols.min() < 0 or cols.max() >= self._nvar):
            raise ValueError("constraint references an undeclared variable")
        row = sp.csr_matrix((vals, (np.zeros_like(cols), cols)), shape=(1, self._nvar))
        return int(self.add_rows(row, sense, [rhs])[0])

    def set_rhs(self, row_ids, rhs) -> None:
        """Change right-hand sides of existing rows (sense is kept)."""
        row_ids = np.atleast_1d(np.asarray(row_ids))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), row_ids.shape)
        starts = np.cumsum([0] + [b[0].shape[0] for b in self._row_blocks])
        for r, v in zip(row_ids.tolist(), rhs.tolist()):
            blk = int(np.searchsorted(starts, r, side="right") - 1)
            local = r - starts[blk]
            self._row_blocks[blk][2][local] = v
            if r < self._pushed_rows:
                self._dirty_rows[r] = (int(self._row_blocks[blk][1][local]), v)

    def set_objective(self, coeffs: Mapping[int, float] | tuple | np.ndarray, sense: str | None = None,
                      offset: float = 0.0) -> None:
        cost = np.zeros(self._nvar)
        if isinstance(coeffs, Mapping):
            for i, v in coeffs.items():
                cost[i] += v
        elif isinstance(coeffs, tuple):
            ids, vals = coeffs
            np.add.at(cost, np.asarray(ids), np.asarray(vals, dtype=float))
        else:
            arr = np.asarray(coeffs, dtype=float)
            cost[:arr.size] = arr
        self._cost = cost
        self._offset = float(offset)
        if sense is not None:
            if sense not in ("min", "max"):
                raise ValueError(f"objective sense must be 'min' or 'max', got {sense!r}")
            self.sense = sense

    @property
    def objective_coefficients(self) -> np.ndarray:
        return self._cost.copy()

    def constraint_matrix(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        if not self._row_blocks:
            return sp.csr_matrix((0, self._nvar)), np.zeros(0, np.int8), np.zeros(0)
        mats = [sp.csr_matrix((b.data, b.indices, b.indptr), shape=(b.shape[0], self._nvar))
                for b, _, _ in self._row_blocks]
        return (sp.vstack(mats, format="csr"),
                np.concatenate([s for _, s, _ in self._row_blocks]),
                np.concatenate([r for _, _, r in self._row_blocks]))

    # -- solving ------------------------------------------------------

    def _sync(self) -> highspy.Highs:
        h = self._highs
        if h is None:
            h = highspy.Highs()
            h.setOptionValue("output_flag", False)
            h.setOptionValue("threads", 1)
            h.setOptionValue("random_seed", 0)
            h.setOptionValue("primal_feasibility_tolerance", FEASIBILITY_TOL * 1e-1)
            h.setOptionValue("mip_feasibility_tolerance", INTEGRALITY_TOL)
            self._highs = h
        n_new = self._nvar - self._pushed_cols
        if n_new:
            lo = np.array(self.lb[self._pushed_cols:], dtype=float)
            hi = np.array(self.ub[self._pushed_cols:], dtype=float)
            h.addVars(n_new, lo, hi)
            kinds = self.kind[self._pushed_cols:]
            int_ids = np.array([self._pushed_cols + k for k, kd in enumerate(kinds)
                                if kd is not VarKind.CONTINUOUS], dtype=np.int32)
            if int_ids.size:
                h.changeColsIntegrality(int_ids.size, int_ids,
                                        np.array([highspy.HighsVarType.kInteger] * int_ids.size))
            self._pushed_cols = self._nvar
        for i, (lo, hi) in self._dirty_bounds.items():
            h.changeColBounds(i, lo, hi)
        self._dirty_bounds.clear()
        for blk in self._row_blocks[self._pushed_blocks:]:
            m, sense, rhs = blk
            k = m.shape[0]
            lo = np.where(sense == 0, -highspy.kHighsInf, rhs)
            hi = np.where(sense == 2, highspy.kHighsInf, rhs)
            m = m.tocsr()
            m.sort_indices()
            h.addRows(k, lo, hi, m.nnz, m.indptr[:-1].astype(np.int32), m.indices.astype(np.int32),
                      m.data.astype(float))
            self._pushed_rows += k
        self._pushed_blocks = len(self._row_blocks)
        for r, (s, v) in self._dirty_rows.items():
            h.changeRowBounds(r, -highspy.kHighsInf if s == 0 else v, highspy.kHighsInf if s == 2 else v)
        self._dirty_rows.clear()
        h.changeColsCost(self._nvar, np.arange(self._nvar, dtype=np.int32), self._cost)
        h.changeObjectiveOffset(self._offset)
        h.changeObjectiveSense(highspy.ObjSense.kMinimize if self.sense == "min" else highspy.ObjSense.kMaximize)
        return h

    def solve(self, gap: float = 1e-6, time_limit: float = INF, dump: str | Path | None = None,
              start=None) -> SolveOutcome:
        """``start`` is an optional full-length value vector offered to the MIP as an incumbent."""
        if self._nvar == 0:
            raise ValueError("model has no variables")
        if gap < 0:
            raise ValueError("gap must be nonnegative")
        h = self._sync()
        h.setOptionValue("mip_rel_gap", float(gap))
        h.setOptionValue("mip_abs_gap", 1e-9)
        h.setOptionValue("time_limit", float(time_limit) if np.isfinite(time_limit) else highspy.kHighsInf)
        if dump is not None:
            h.writeModel(str(dump))
        if start is not None and self.has_integers:
            sol = highspy.HighsSolution()
            sol.col_value = np.asarray(start, dtype=float).tolist()
            sol.value_valid = True
            h.setSolution(sol)
        t0 = time.perf_counter()
        h.run()
        wall = time.perf_counter() - t0
        ms = h.getModelStatus()
        info = h.getInfo()
        S = highspy.HighsModelStatus
        integer = self.has_integers
        if ms == S.kOptimal:
            status = Status.OPTIMAL
        elif ms == S.kInfeasible:
            status = Status.INFEASIBLE
        elif ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
            status = Status.UNBOUNDED
        elif ms in (S.kTimeLimit, S.kIterationLimit, S.kSolutionLimit, S.kInterrupt):
            status = Status.LIMIT
        else:
            raise SolverError(f"{self.name}: unexpected HiGHS status {h.modelStatusToString(ms)}")
        values = np.full(self._nvar, np.nan)
        duals = None
        objective = bound = np.nan
        mip_gap = 0.0
        has_sol = status is Status.OPTIMAL or (status is Status.LIMIT and info.primal_solution_status == 2)
        if has_sol:
            sol = h.getSolution()
            values = np.asarray(sol.col_value, dtype=float)
            if integer:
                ints = np.array([k is not VarKind.CONTINUOUS for k in self.kind])
                values[ints] = np.round(values[ints])
            lo = np.asarray(self.lb)
            hi = np.asarray(self.ub)
            values = np.clip(values, lo, hi)
            objective = float(info.objective_function_value)
            if integer:
                bound = float(info.mip_dual_bound)
                mip_gap = float(info.mip_gap)
            else:
                bound = objective
                duals = np.asarray(sol.row_dual, dtype=float)
        return SolveOutcome(status, objective, bound, values, duals, wall, mip_gap)

    def write_lp(self, path: str | Path) -> None:
        self._sync().writeModel(str(path))
