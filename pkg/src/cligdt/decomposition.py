"""Two-stage robust solve for a fixed uncertainty set.

The master problem is a relaxation built from a finite list of scenarios.
The subproblem finds the worst-case scenario for a fixed first-stage
decision by writing the recourse LP's optimality conditions with big-M
indicators.  Classical C&CG indexes master blocks by scenario and starts
from scratch for every set; the parametric variant indexes them by the
dual point pi returned by the subproblem and re-derives each block's
scenario for the new set, so the whole pool can be carried over.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .compact import CompactTwoStageProblem, RecourseEvaluator
from .solver import INF, Model, Status, VarKind
from .uncertainty import GeneralizedSet, support, support_greedy

log = logging.getLogger(__name__)

ENGINES = ("pccg", "ccg")


class SolverLimitError(RuntimeError):
    """A MILP hit its time limit before proving optimality."""


class MasterInfeasible(RuntimeError):
    pass


class BigMError(RuntimeError):
    """Big-M values kept binding after the allowed escalations."""


@dataclass
class BigMPolicy:
    fallback: float = 1e5
    factor: float = 10.0
    max_escalations: int = 3
    proximity: float = 1e-4


@dataclass
class OptimalityCut:
    """A master block; ``pi`` is None for fixed-scenario blocks (nominal or classical C&CG)."""
    pi: np.ndarray | None
    scenarios: dict = field(default_factory=dict)  # snapped alpha -> u
    origin: float | None = None                    # alpha at which the cut was generated

    def scenario(self, alpha: float) -> np.ndarray:
        if self.pi is None:
            return next(iter(self.scenarios.values()))
        return self.scenarios[alpha]


def refresh_cut_scenarios(problem: CompactTwoStageProblem, cuts: list[OptimalityCut],
                          uset: GeneralizedSet) -> list[OptimalityCut]:
    """Compute u^pi(alpha) for every pi-indexed cut (cached per alpha)."""
    for cut in cuts:
        if cut.pi is None or uset.alpha in cut.scenarios:
            continue
        _, u = support(uset, -(problem.E.T @ cut.pi))
        cut.scenarios[uset.alpha] = u
    return cuts


def eta_lower_bound(problem: CompactTwoStageProblem, u_low, u_high) -> float:
    """min c2'y over relaxed x, u in the envelope box and feasible y; -inf if unbounded."""
    m = Model("min", name="eta-bound")
    x = m.add_vars(problem.n_x, problem.x_lb, problem.x_ub)
    y = m.add_vars(problem.n_y)
    u = m.add_vars(problem.n_u, u_low, u_high)
    m.add_rows(_place(problem.A, x, m.num_vars), np.where(problem.a_eq, 1, 0), problem.b)
    block = sp.hstack([problem.B1, problem.B2, problem.E], format="csr")
    m.add_rows(_place(block, np.concatenate([x, y, u]), m.num_vars), np.where(problem.eq, 1, 2), problem.d)
    m.set_objective((y, problem.c2))
    out = m.solve()
    if out.status is Status.OPTIMAL:
        return out.objective - 1e-6 * max(1.0, abs(out.objective))
    return -INF


def _place(block, cols, n) -> sp.csr_matrix:
    coo = sp.coo_matrix(block)
    return sp.csr_matrix((coo.data, (coo.row, np.asarray(cols)[coo.col])), shape=(coo.shape[0], n))


class Master:
    """min c1'x + eta subject to one recourse block per scenario; grows in place."""

    def __init__(self, problem: CompactTwoStageProblem, eta_lb: float = -INF):
        self.problem = problem
        m = Model("min", name="master")
        self.x = m.add_vars(problem.n_x, problem.x_lb, problem.x_ub)
        for i in np.flatnonzero(problem.x_integer):
            m.kind[int(self.x[i])] = VarKind.INTEGER
        self.eta = m.add_var(eta_lb, INF)
        m.add_rows(_place(problem.A, self.x, m.num_vars), np.where(problem.a_eq, 1, 0), problem.b)
        self.model = m
        self.blocks: list[tuple[np.ndarray, np.ndarray]] = []  # (row ids, scenario)
        self.block_y: list[np.ndarray] = []
        self._sense = np.where(problem.eq, 1, 2)
        self._B1B2 = sp.hstack([problem.B1, problem.B2], format="csr")

    def has_scenario(self, u, tol: float = 1e-9) -> bool:
        return any(np.max(np.abs(s - u), initial=0.0) <= tol for _, s in self.blocks)

    def add_scenario(self, u) -> bool:
        """Append a recourse block for ``u`` unless an identical one exists."""
        u = np.asarray(u, dtype=float)
        if self.has_scenario(u):
            return False
        p = self.problem
        m = self.model
        y = m.add_vars(p.n_y)
        rows = m.add_rows(_place(self._B1B2, np.concatenate([self.x, y]), m.num_vars), self._sense, p.d - p.E @ u)
        coeffs = {int(self.eta): 1.0}
        for j, c in zip(y[p.c2 != 0], p.c2[p.c2 != 0]):
            coeffs[int(j)] = -float(c)
        m.add_constraint(coeffs, ">=", 0.0)
        self.blocks.append((rows, u.copy()))
        self.block_y.append(y)
        m.set_objective(np.concatenate([p.c1, [1.0], np.zeros(m.num_vars - p.n_x - 1)]))
        return True

    def start_from(self, x, evaluate: RecourseEvaluator) -> np.ndarray:
        """Feasible master point at first-stage ``x``: recourse LP per block, eta at their max."""
        v = np.zeros(self.model.num_vars)
        v[self.x] = x
        eta = -INF
        for (_, u), y in zip(self.blocks, self.block_y):
            r = evaluate(x, u)
            v[y] = r.y
            eta = max(eta, r.value)
        v[self.eta] = max(eta, self.model.lb[int(self.eta)])
        return v

    def solve(self, gap: float, time_limit: float = INF, start=None):
        out = self.model.solve(gap=gap, time_limit=time_limit, start=start)
        if out.status is Status.INFEASIBLE:
            raise MasterInfeasible("master problem is infeasible")
        if out.status is Status.LIMIT:
            if np.isnan(out.values).any() or not np.isfinite(out.bound):
                raise SolverLimitError(f"master hit its time limit ({time_limit:.0f} s)")
            # the dual bound is still valid, only the incumbent may be suboptimal
            log.info("master stopped at its time limit with gap %.2e", out.mip_gap)
            return out
        if out.status is not Status.OPTIMAL:
            raise RuntimeError(f"master ended with status {out.status.value}")
        return out


def build_master(problem: CompactTwoStageProblem, scenarios, eta_lb: float = -INF) -> Master:
    master = Master(problem, eta_lb)
    for u in scenarios:
        master.add_scenario(u)
    return master


# -- subproblem -------------------------------------------------------------------

@dataclass
class SubproblemResult:
    value: float        # incumbent worst-case recourse value
    bound: float        # proven upper bound on the worst case
    pi: np.ndarray
    u: np.ndarray
    y: np.ndarray
    escalations: int
    wall_time: float
    max_m_ratio: float  # largest value / M over non-certified big-M pairs
    limited: bool = False  # time limit hit: value is an incumbent, bound may be loose


def _row_abs_bounds(mat: sp.csr_matrix, lo, hi):
    """Interval bounds of mat @ v over lo <= v <= hi."""
    mat = sp.csr_matrix(mat)
    pos = mat.maximum(0)
    neg = mat.minimum(0)
    with np.errstate(invalid="ignore"):
        upper = pos @ np.where(np.isinf(hi), 0, hi) + neg @ np.where(np.isinf(lo), 0, lo)
        lower = pos @ np.where(np.isinf(lo), 0, lo) + neg @ np.where(np.isinf(hi), 0, hi)
    # flag rows touching an infinite bound in the unfavourable direction
    inf_hi = sp.csr_matrix(np.isinf(hi).astype(float)[None, :])
    inf_lo = sp.csr_matrix(np.isinf(lo).astype(float)[None, :])
    up_inf = (pos @ inf_hi.T).toarray().ravel() + (-neg @ inf_lo.T).toarray().ravel() > 0
    lo_inf = (pos @ inf_lo.T).toarray().ravel() + (-neg @ inf_hi.T).toarray().ravel() > 0
    upper = np.where(up_inf, INF, upper)
    lower = np.where(lo_inf, -INF, lower)
    return lower, upper


_DUAL_RANGE_CACHE: dict[int, tuple] = {}


def _recession_support(problem: CompactTwoStageProblem) -> tuple[np.ndarray, np.ndarray]:
    """Rows along which the dual polyhedron is unbounded upward / downward.

    Works on the recession cone {B2'd <= 0, d >= 0 on inequality rows}: a sum
    of rays is a ray, so one LP picks up every direction that can coexist and
    a few repeats collect the rest.
    """
    p = problem
    k = p.m_y
    up = np.zeros(k, bool)
    dn = np.zeros(k, bool)
    eq = np.flatnonzero(p.eq)
    while True:
        m = Model("max", name="dual-rays")
        d = m.add_vars(k, np.where(p.eq, -INF, 0.0), INF)
        tp = m.add_vars(k, 0.0, np.where(up, 0.0, 1.0))
        tn = m.add_vars(eq.size, 0.0, np.where(dn[eq], 0.0, 1.0))
        N = m.num_vars
        m.add_rows(_place(p.B2.T, d, N), "<=", np.zeros(p.n_y))
        I = sp.identity(k, format="csr")
        m.add_rows(_place(sp.hstack([I, -I]), np.concatenate([tp, d]), N), "<=", np.zeros(k))
        if eq.size:
            sel = sp.csr_matrix((np.ones(eq.size), (np.arange(eq.size), eq)), shape=(eq.size, k))
            m.add_rows(_place(sp.hstack([sp.identity(eq.size), sel]), np.concatenate([tn, d]), N), "<=",
                       np.zeros(eq.size))
        m.set_objective(np.concatenate([np.zeros(k), np.ones(k + eq.size)]))
        out = m.solve()
        if out.status is not Status.OPTIMAL or out.objective < 0.5:
            return up, dn
        new_up = out.values[tp] > 1e-7
        new_dn = np.zeros(k, bool)
        new_dn[eq] = out.values[tn] > 1e-7
        if not (new_up & ~up).any() and not (new_dn & ~dn).any():
            return up, dn
        up |= new_up
        dn |= new_dn


def dual_ranges(problem: CompactTwoStageProblem) -> tuple[np.ndarray, np.ndarray]:
    """Per-row range of pi over {B2'pi <= c2, pi >= 0 on inequality rows}.

    Every dual point the subproblem can produce lies in this polyhedron, so
    finite ends are certified big-M values.  Entries are +-inf where the
    polyhedron is unbounded.  Independent of x and u, computed once per problem.
    """
    hit = _DUAL_RANGE_CACHE.get(id(problem))
    if hit is not None and hit[0] is problem:
        return hit[1], hit[2]
    p = problem
    up_free, dn_free = _recession_support(p)
    m = Model("max", name="dual-range")
    pi = m.add_vars(p.m_y, np.where(p.eq, -INF, 0.0), INF)
    m.add_rows(_place(p.B2.T, pi, m.num_vars), "<=", p.c2)
    lo = np.where(p.eq, -INF, 0.0)
    hi = np.full(p.m_y, INF)
    for r in range(p.m_y):
        for sense, target, unbounded in (("max", hi, up_free), ("min", lo, dn_free)):
            if unbounded[r] or (sense == "min" and not p.eq[r]):
                continue
            m.set_objective({int(pi[r]): 1.0}, sense=sense)
            out = m.solve()
            if out.status is Status.OPTIMAL:
                target[r] = out.objective
    _DUAL_RANGE_CACHE[id(problem)] = (problem, lo, hi)
    return lo, hi


class Subproblem:
    """max_{u in U} min_y c2'y as a single MILP via KKT conditions and big-M."""

    def __init__(self, problem: CompactTwoStageProblem, uset: GeneralizedSet, policy: BigMPolicy | None = None,
                 scale: dict | None = None):
        self.problem = problem
        self.uset = uset
        self.policy = policy or BigMPolicy()
        p = problem
        self.ineq = np.flatnonzero(~p.eq)
        paired = np.zeros(p.n_y, dtype=bool)
        if len(p.free_pairs):
            paired[np.asarray(p.free_pairs).ravel()] = True
        self.cols = np.flatnonzero(~paired)
        self._init_bigm(scale or {})
        self._model = None
        self._x_hat = None

    def _init_bigm(self, scale):
        p, pol = self.problem, self.policy
        fb = pol.fallback
        y_hi = np.where(np.isfinite(p.y_ub), p.y_ub, INF)
        lo = np.concatenate([np.zeros(p.n_y), self.uset.lb, p.x_lb])
        hi = np.concatenate([y_hi, self.uset.ub, p.x_ub])
        block = sp.hstack([p.B2, p.E, p.B1], format="csr")[self.ineq]
        _, upper = _row_abs_bounds(block, lo, hi)
        slack_ub = upper - p.d[self.ineq]
        self.m_slack = np.where(np.isfinite(slack_ub), np.maximum(slack_ub, 1e-6), fb)
        self.cert_slack = np.isfinite(slack_ub)
        if "pi" in scale:
            # caller-imposed value, never treated as certified
            pi_abs = np.full(p.m_y, float(scale["pi"]))
            self.cert_pi_rows = np.zeros(p.m_y, bool)
        else:
            d_lo, d_hi = dual_ranges(p)
            span = np.maximum(np.abs(d_lo), np.abs(d_hi))
            self.cert_pi_rows = np.isfinite(span)
            pi_abs = np.where(self.cert_pi_rows, np.maximum(span, 1e-6), fb)
        self.pi_abs = pi_abs
        self.m_pi = pi_abs[self.ineq].copy()
        self.cert_pi = self.cert_pi_rows[self.ineq]
        ycol = y_hi[self.cols]
        self.m_y = np.where(np.isfinite(ycol), np.maximum(ycol, 1e-6), fb)
        self.cert_y = np.isfinite(ycol)
        self._set_m_rc()

    def _set_m_rc(self):
        # reduced cost c_j - B2_j'pi over the current |pi_r| bounds
        p = self.problem
        sub = sp.csc_matrix(p.B2[:, self.cols])
        m_rc = np.maximum(np.abs(p.c2[self.cols]) + abs(sub).T @ self.pi_abs, 1e-6)
        # never undo an earlier escalation
        self.m_rc = m_rc if getattr(self, "m_rc", None) is None else np.maximum(m_rc, self.m_rc)
        uncert = sp.csc_matrix((abs(sub) > 0).multiply((~self.cert_pi_rows).astype(float)[:, None]))
        self.cert_rc = np.diff(uncert.indptr) == 0 if uncert.nnz == 0 else np.asarray(
            (uncert != 0).sum(axis=0)).ravel() == 0

    def _build(self):
        p, U = self.problem, self.uset
        n_u = p.n_u
        m = Model("max", name="subproblem")
        self.u = m.add_vars(n_u, U.lb, U.ub)
        self.em = m.add_vars(n_u, 0.0, 1.0)
        self.ep = m.add_vars(n_u, 0.0, 1.0)
        y_ub = np.full(p.n_y, INF)
        y_ub[self.cols] = self.m_y
        self.y = m.add_vars(p.n_y, 0.0, y_ub)
        pi_lb = np.where(p.eq, -INF, 0.0)
        self.pi = m.add_vars(p.m_y, pi_lb, INF)
        self.w = m.add_vars(self.ineq.size, kind=VarKind.BINARY)
        self.z = m.add_vars(self.cols.size, kind=VarKind.BINARY)
        N = m.num_vars
        I = sp.identity(n_u, format="csr")
        # u = nominal - down*em + up*ep, budget on deviations
        m.add_rows(_place(sp.hstack([I, sp.diags(U.down), -sp.diags(U.up)]),
                          np.concatenate([self.u, self.em, self.ep]), N), "=", U.nominal)
        m.add_rows(_place(sp.csr_matrix(np.full((1, 2 * n_u), 1.0 / U.horizon)),
                          np.concatenate([self.em, self.ep]), N), "<=", [U.gamma])
        # primal feasibility: B2 y + E u (>=|=) d - B1 x
        prim = sp.hstack([p.B2, p.E], format="csr")
        self.r_primal = m.add_rows(_place(prim, np.concatenate([self.y, self.u]), N),
                                   np.where(p.eq, 1, 2), p.d)
        # dual feasibility
        m.add_rows(_place(p.B2.T, self.pi, N), "<=", p.c2)
        # slack_r <= M (1 - w_r)
        k = self.ineq.size
        blk = sp.hstack([prim[self.ineq], sp.diags(self.m_slack)], format="csr")
        self.r_slack = m.add_rows(_place(blk, np.concatenate([self.y, self.u, self.w]), N), "<=",
                                  p.d[self.ineq] + self.m_slack)
        # pi_r <= M w_r
        blk = sp.hstack([sp.identity(k), -sp.diags(self.m_pi)], format="csr")
        m.add_rows(_place(blk, np.concatenate([self.pi[self.ineq], self.w]), N), "<=", np.zeros(k))
        # y_j <= M (1 - z_j)
        c = self.cols.size
        blk = sp.hstack([sp.identity(c), sp.diags(self.m_y)], format="csr")
        m.add_rows(_place(blk, np.concatenate([self.y[self.cols], self.z]), N), "<=", self.m_y)
        # c_j - B2_j'pi <= M z_j
        blk = sp.hstack([-p.B2[:, self.cols].T, -sp.diags(self.m_rc)], format="csr")
        m.add_rows(_place(blk, np.concatenate([self.pi, self.z]), N), "<=", -p.c2[self.cols])
        m.set_objective((self.y, p.c2))
        self._model = m
        self._x_hat = None

    def _set_x(self, x_hat):
        p = self.problem
        shift = p.B1 @ x_hat
        self._model.set_rhs(self.r_primal, p.d - shift)
        self._model.set_rhs(self.r_slack, p.d[self.ineq] - shift[self.ineq] + self.m_slack)
        self._x_hat = x_hat

    def _polish(self, x_hat, u):
        """Least-l1 optimal dual of the recourse LP at (x_hat, u).

        The KKT model leaves pi free to wander along unbounded optimal faces
        (e.g. paired rows that are both tight); the polished point is a vertex
        of the dual polyhedron and is what the big-M check is applied to.
        """
        p = self.problem
        h = p.rhs(x_hat, u)
        lp = Model("min", name="recourse")
        y = lp.add_vars(p.n_y)
        lp.add_rows(_place(p.B2, y, lp.num_vars), np.where(p.eq, 1, 2), h)
        lp.set_objective((y, p.c2))
        out = lp.solve()
        if out.status is not Status.OPTIMAL:
            return None
        q = out.objective
        eqr = np.flatnonzero(p.eq)
        m = Model("min", name="dual-polish")
        pi = m.add_vars(p.m_y, np.where(p.eq, -INF, 0.0), INF)
        t = m.add_vars(eqr.size)
        N = m.num_vars
        m.add_rows(_place(p.B2.T, pi, N), "<=", p.c2)
        m.add_rows(_place(sp.csr_matrix(h[None, :]), pi, N), ">=", [q - 1e-7 * max(1.0, abs(q))])
        k = eqr.size
        if k:
            sel = sp.csr_matrix((np.ones(k), (np.arange(k), eqr)), shape=(k, p.m_y))
            m.add_rows(_place(sp.hstack([sel, -sp.identity(k)]), np.concatenate([pi, t]), N), "<=", np.zeros(k))
            m.add_rows(_place(sp.hstack([-sel, -sp.identity(k)]), np.concatenate([pi, t]), N), "<=", np.zeros(k))
        cost = np.zeros(N)
        cost[pi[self.ineq]] = 1.0
        cost[t] = 1.0
        m.set_objective(cost)
        res = m.solve()
        if res.status is not Status.OPTIMAL:
            return None
        return res.values[pi]

    def _near_bounds(self, out, pi):
        """Non-certified big-M pairs whose value sits within the proximity of M."""
        p, tol = self.problem, self.policy.proximity
        v = out.values
        y = v[self.y]
        slack = (p.B2 @ y + p.E @ v[self.u] - p.d + p.B1 @ self._x_hat)[self.ineq]
        rc = p.c2[self.cols] - (p.B2[:, self.cols].T @ pi)
        checks = {
            "slack": (slack, self.m_slack, ~self.cert_slack),
            "pi": (pi[self.ineq], self.m_pi, ~self.cert_pi),
            "y": (y[self.cols], self.m_y, ~self.cert_y),
            "rc": (rc, self.m_rc, ~self.cert_rc),
        }
        hits = {}
        ratio = 0.0
        for name, (val, M, mask) in checks.items():
            near = mask & (val >= M - tol * np.maximum(1.0, M))
            if np.any(mask):
                ratio = max(ratio, float(np.max(np.where(mask, val / M, 0.0))))
            if near.any():
                hits[name] = near
        return hits, ratio

    def _escalate_all(self, escalations: int) -> bool:
        """Scale every non-certified M; False when there is nothing left to scale."""
        masks = [~self.cert_slack, ~self.cert_pi, ~self.cert_y, ~self.cert_rc]
        if not any(m.any() for m in masks):
            return False
        if escalations >= self.policy.max_escalations:
            raise BigMError(f"subproblem infeasible after {escalations} escalations; big-M values too tight")
        f = self.policy.factor
        log.warning("subproblem infeasible with the current big-M values; escalating x%g (attempt %d)", f,
                    escalations + 1)
        self.m_slack[masks[0]] *= f
        self.pi_abs[~self.cert_pi_rows] *= f
        self.m_pi = self.pi_abs[self.ineq].copy()
        self.m_rc[masks[3]] *= f
        self._set_m_rc()
        self.m_y[masks[2]] *= f
        self._model = None
        return True

    def _start_vector(self, x_hat, u, y, pi) -> np.ndarray:
        """A KKT point built from a recourse solution (y, pi) at u, offered to the MIP as incumbent."""
        p, U = self.problem, self.uset
        v = np.zeros(self._model.num_vars)
        dev = u - U.nominal
        with np.errstate(divide="ignore", invalid="ignore"):
            v[self.em] = np.where(dev < 0, np.clip(-dev / U.down, 0, 1), 0.0)
            v[self.ep] = np.where(dev > 0, np.clip(dev / U.up, 0, 1), 0.0)
        v[self.u] = u
        v[self.y] = y
        v[self.pi] = pi
        v[self.w] = pi[self.ineq] > 1e-9
        v[self.z] = y[self.cols] <= 1e-9
        return v

    def solve(self, x_hat, gap: float = 1e-6, time_limit: float = INF, start=None) -> SubproblemResult:
        """``start`` is an optional (u, y, pi) triple from a recourse solve at ``x_hat``."""
        x_hat = np.asarray(x_hat, dtype=float)
        escalations = 0
        t0 = time.perf_counter()
        while True:
            if self._model is None:
                self._build()
            self._set_x(x_hat)
            sv = None if start is None else self._start_vector(x_hat, *start)
            out = self._model.solve(gap=gap, time_limit=time_limit, start=sv)
            limited = out.status is Status.LIMIT
            if limited and not np.isfinite(out.objective):
                raise SolverLimitError(f"subproblem found no solution within its time limit ({time_limit:.0f} s)")
            if out.status is Status.INFEASIBLE and self._escalate_all(escalations):
                # uncertified bounds can cut off every KKT point
                escalations += 1
                continue
            if not limited and out.status is not Status.OPTIMAL:
                raise RuntimeError(f"subproblem ended with status {out.status.value}")
            pi = self._polish(x_hat, out.values[self.u])
            if pi is None:
                pi = out.values[self.pi]
            hits, ratio = self._near_bounds(out, pi)
            if not hits:
                break
            if escalations >= self.policy.max_escalations:
                raise BigMError(f"big-M still binding after {escalations} escalations: {sorted(hits)}")
            escalations += 1
            f = self.policy.factor
            log.warning("big-M binding for %s; escalating x%g (attempt %d)", sorted(hits), f, escalations)
            if "slack" in hits:
                self.m_slack[hits["slack"]] *= f
            if "pi" in hits:
                self.m_pi[hits["pi"]] *= f
                self.pi_abs[self.ineq] = self.m_pi
                self._set_m_rc()
            if "y" in hits:
                self.m_y[hits["y"]] *= f
            if "rc" in hits:
                self.m_rc[hits["rc"]] *= f
            self._model = None
        v = out.values
        return SubproblemResult(out.objective, max(out.bound, out.objective), pi.copy(),
                                v[self.u].copy(), v[self.y].copy(), escalations,
                                time.perf_counter() - t0, ratio, limited)


@dataclass
class AscentResult:
    value: float
    pi: np.ndarray
    u: np.ndarray
    y: np.ndarray
    lp_solves: int
    wall_time: float


def alternating_ascent(problem: CompactTwoStageProblem, uset: GeneralizedSet, x_hat, starts,
                       evaluate: RecourseEvaluator | None = None, max_steps: int = 30) -> AscentResult:
    """Local search for a bad scenario: recourse duals at u, then the best u for those duals.

    Each step cannot decrease Q(x_hat, u) since Q(x, u') >= pi'h(u') >= pi'h(u) = Q(x, u).
    The value is a lower bound on the worst case, never a certificate.
    """
    t0 = time.perf_counter()
    ev = evaluate or RecourseEvaluator(problem)
    best = None
    solves = 0
    for u in starts:
        u = np.asarray(u, dtype=float)
        prev = -INF
        for _ in range(max_steps):
            r = ev(x_hat, u)
            solves += 1
            if r.value <= prev + 1e-9 * max(1.0, abs(prev)):
                break
            prev = r.value
            if best is None or r.value > best[0]:
                best = (r.value, r.pi.copy(), u.copy(), r.y.copy())
            _, u_next = support_greedy(uset, -(problem.E.T @ r.pi))
            if np.allclose(u_next, u, rtol=0, atol=1e-10):
                break
            u = u_next
    return AscentResult(best[0], best[1], best[2], best[3], solves, time.perf_counter() - t0)


def solve_subproblem(problem, uset, x_hat, policy: BigMPolicy | None = None, gap: float = 1e-6,
                     time_limit: float = INF) -> SubproblemResult:
    return Subproblem(problem, uset, policy).solve(x_hat, gap=gap, time_limit=time_limit)


# -- C&CG loops -----------------------------------------------------------------------

@dataclass
class RoundLog:
    iteration: int
    lb: float
    ub: float
    mp_time: float
    sp_time: float
    cuts_added: int
    escalations: int = 0

    @property
    def gap(self) -> float:
        if not np.isfinite(self.ub):
            return INF
        return (self.ub - self.lb) / max(abs(self.lb), 1e-9)


@dataclass
class CCGResult:
    value: float             # final lower bound, the reported Lambda*(alpha)
    upper: float
    x: np.ndarray            # incumbent achieving the upper bound
    rounds: list[RoundLog]
    cuts: list[OptimalityCut]
    alpha: float
    engine: str
    converged: bool
    stalled: bool = False
    sp_solves: int = 0
    requested: float | None = None  # alpha asked for, before snapping to the grid
    limited: bool = False           # stopped because the subproblem could not certify in time

    @property
    def iterations(self) -> int:
        return len(self.rounds)

    @property
    def gap(self) -> float:
        return self.rounds[-1].gap if self.rounds else INF


@dataclass
class CCGOptions:
    eps: float = 0.005
    max_iter: int = 50
    master_gap: float = 1e-3
    sub_gap: float = 1e-4
    time_limit: float = INF       # per master solve
    sub_time_limit: float = INF   # per KKT subproblem solve
    bigm: BigMPolicy = field(default_factory=BigMPolicy)
    pi_scale: float | None = None
    # cheap local search for violated scenarios before the KKT model; the
    # KKT model still certifies every reported upper bound
    ascent: bool = True
    ascent_starts: int = 6    # most recent master scenarios used as starting points
    ascent_random: int = 8    # extra starts at vertices picked by seeded random directions
    # let the KKT gap use the slack left in eps instead of sub_gap alone
    adaptive_gap: bool = True


def ccg_solve(problem: CompactTwoStageProblem, uset: GeneralizedSet, engine: str = "pccg",
              options: CCGOptions | None = None, warm_cuts: list[OptimalityCut] | None = None,
              eta_lb: float | None = None, x_start=None) -> CCGResult:
    """Solve min_x c1'x + max_{u in U} min_y c2'y for one uncertainty set."""
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}")
    opt = options or CCGOptions()
    if opt.eps <= 0:
        raise ValueError("eps must be positive")
    alpha = uset.alpha
    nominal = uset.nominal
    if eta_lb is None:
        eta_lb = eta_lower_bound(problem, uset.lb, uset.ub)
    cuts = list(warm_cuts) if (engine == "pccg" and warm_cuts) else []
    if not any(c.pi is None for c in cuts):
        cuts.insert(0, OptimalityCut(None, {alpha: nominal.copy()}, alpha))
    refresh_cut_scenarios(problem, cuts, uset)
    master = build_master(problem, [c.scenario(alpha) for c in cuts], eta_lb)
    scale = {"pi": opt.pi_scale} if opt.pi_scale else None
    sub = Subproblem(problem, uset, opt.bigm, scale)

    lb, ub = -INF, INF
    x_best = None
    rounds: list[RoundLog] = []
    converged = stalled = limited = False
    sp_solves = 0
    evaluator = RecourseEvaluator(problem)
    for it in range(1, opt.max_iter + 1):
        start = None if x_start is None else master.start_from(x_start, evaluator)
        mo = master.solve(opt.master_gap, opt.time_limit, start=start)
        lb = max(lb, mo.bound)
        x_hat = mo.values[master.x]
        x_hat[problem.x_integer] = np.round(x_hat[problem.x_integer])
        x_start = x_hat
        c1x = float(problem.c1 @ x_hat)
        ts = time.perf_counter()
        pi = u_new = None
        escalations = 0
        heur = None
        if opt.ascent:
            starts = [nominal] + [b[1] for b in master.blocks[::-1][:max(opt.ascent_starts - 1, 0)]]
            rng = np.random.default_rng(it)
            starts += [support_greedy(uset, rng.standard_normal(problem.n_u))[1] for _ in range(opt.ascent_random)]
            heur = alternating_ascent(problem, uset, x_hat, starts, evaluator)
            if c1x + heur.value - lb > opt.eps * abs(lb) and not master.has_scenario(heur.u):
                # gap cannot close at this x; a found scenario is enough to make progress
                pi, u_new = heur.pi, heur.u
        if u_new is None:
            gap = opt.sub_gap
            if opt.adaptive_gap and heur is not None:
                room = lb + opt.eps * abs(lb) - c1x - heur.value
                gap = max(gap, min(0.5 * room / max(abs(heur.value), 1.0), 0.01))
            try:
                sr = sub.solve(x_hat, gap=gap, time_limit=opt.sub_time_limit,
                               start=None if heur is None else (heur.u, heur.y, heur.pi))
            except SolverLimitError:
                if heur is None:
                    raise
                # no KKT incumbent in time: keep the lower bound, stop uncertified
                log.warning("alpha=%.3f round %d: subproblem produced nothing within %.0f s", alpha, it,
                            opt.sub_time_limit)
                rounds.append(RoundLog(it, lb, ub, mo.wall_time, time.perf_counter() - ts, 0, 0))
                limited = True
                break
            sp_solves += 1
            escalations = sr.escalations
            cand = c1x + sr.bound
            if cand < ub:
                ub, x_best = cand, x_hat
            if heur is not None and heur.value > sr.value:
                pi, u_new, found = heur.pi, heur.u, heur.value
            else:
                pi, u_new, found = sr.pi, sr.u, sr.value
            if sr.limited and ub - lb > opt.eps * abs(lb) and c1x + found - lb <= opt.eps * abs(lb):
                # nothing violated was found and the bound could not be closed in time
                limited = True
        sp_time = time.perf_counter() - ts
        added = 0
        done = ub - lb <= opt.eps * abs(lb)
        if not done and not limited:
            if engine == "pccg":
                dup = [c for c in cuts if c.pi is not None and np.max(np.abs(c.pi - pi)) <= 1e-6]
                if dup:
                    log.info("alpha=%.3f round %d: dual point already in the pool (stall check)", alpha, it)
                cut = OptimalityCut(pi.copy(), {alpha: u_new.copy()}, alpha)
            else:
                cut = OptimalityCut(None, {alpha: u_new.copy()}, alpha)
            if master.add_scenario(u_new):
                cuts.append(cut)
                added = 1
            elif engine == "pccg" and not dup:
                cuts.append(cut)  # same scenario, new dual point: keep it for later sets
        rounds.append(RoundLog(it, lb, ub, mo.wall_time, sp_time, added, escalations))
        log.debug("alpha=%.3f %s round %d LB=%.4f UB=%.4f (master %.1fs, sub %.1fs)", alpha, engine, it, lb, ub,
                  mo.wall_time, sp_time)
        if done:
            converged = True
            break
        if limited:
            log.warning("alpha=%.3f: subproblem time limit; stopping uncertified at gap %.2e", alpha,
                        rounds[-1].gap)
            break
        if not added:
            stalled = True
            log.warning("alpha=%.3f: worst-case scenario already in the master; stopping at gap %.2e",
                        alpha, rounds[-1].gap)
            break
    if x_best is None:
        x_best = x_hat
    return CCGResult(lb, ub, x_best, rounds, cuts, alpha, engine, converged, stalled, sp_solves, limited=limited)


def write_round_log(rounds: list[RoundLog], path, alpha: float | None = None, engine: str = "") -> None:
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["alpha", "engine", "iteration", "lb", "ub", "gap", "mp_time", "sp_time",
                        "cuts_added", "escalations"])
        for r in rounds:
            w.writerow(["" if alpha is None else f"{alpha:.6f}", engine, r.iteration, f"{r.lb:.6f}",
                        f"{r.ub:.6f}", f"{r.gap:.6e}", f"{r.mp_time:.4f}", f"{r.sp_time:.4f}",
                        r.cuts_added, r.escalations])
