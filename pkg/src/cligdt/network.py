"""Distribution-network instance data and its compilation into compact form.

Units: power in kW, energy in kWh, money in dollars, squared voltage in p.u.
Line impedances are given in ohm together with the base voltage (kV) and base
power (kVA); the voltage-drop rows are scaled by the base power so that the
recourse voltage variables live in "kW-equivalent" units, which keeps the
dual multipliers of those rows in a range the big-M subproblem can handle.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .compact import CompactTwoStageProblem, scenario_program
from .solver import INF, Status


class DataError(ValueError):
    """Malformed network or profile data."""


@dataclass
class Line:
    parent: int
    child: int
    r: float
    x: float
    phi: float = 0.02


@dataclass
class DG:
    bus: int
    p_max: float
    p_min: float
    ramp_up: float
    ramp_down: float
    q_max: float
    q_min: float
    cost: float
    startup_cost: float
    name: str = ""


@dataclass
class ESS:
    bus: int
    p_charge_max: float
    p_discharge_max: float
    e_max: float
    e_min: float
    eta: float
    name: str = ""


@dataclass
class Tariffs:
    import_price: np.ndarray
    export_price: np.ndarray
    import_price_rt: np.ndarray
    export_price_rt: np.ndarray


@dataclass
class NetworkInstance:
    n_buses: int
    lines: list[Line]
    dgs: list[DG]
    esss: list[ESS]
    tariffs: Tariffs
    curtail_penalty: float
    shed_penalty: float
    kappa_import: float
    kappa_export: float
    line_limit: float
    horizon: int
    dt: float = 1.0
    v_min: float = 0.95
    v_max: float = 1.05
    base_kv: float = 12.66
    base_kva: float = 10000.0
    tan_delta: np.ndarray | None = None
    pv_buses: tuple[int, ...] = ()
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.tan_delta is None:
            self.tan_delta = np.zeros(self.n_buses)
        self.tan_delta = np.asarray(self.tan_delta, dtype=float)
        for name in ("import_price", "export_price", "import_price_rt", "export_price_rt"):
            setattr(self.tariffs, name, np.broadcast_to(
                np.asarray(getattr(self.tariffs, name), dtype=float), (self.horizon,)).copy())

    @property
    def z_base(self) -> float:
        return self.base_kv ** 2 / (self.base_kva / 1000.0)

    def validate(self) -> None:
        n = self.n_buses
        if n < 2:
            raise DataError("network needs at least two buses")
        if len(self.lines) != n - 1:
            raise DataError(f"network is not radial: {len(self.lines)} lines for {n} buses")
        children: dict[int, list[int]] = {}
        seen_child = set()
        for ln in self.lines:
            for b in (ln.parent, ln.child):
                if not 0 <= b < n:
                    raise DataError(f"line {ln.parent}-{ln.child} references unknown bus {b}")
            if ln.child in seen_child or ln.child == 0:
                raise DataError(f"bus {ln.child} has more than one parent line")
            seen_child.add(ln.child)
            children.setdefault(ln.parent, []).append(ln.child)
            if not 0 <= ln.phi < 1:
                raise DataError(f"line {ln.parent}-{ln.child}: loss factor must lie in [0, 1)")
        reached, stack = {0}, [0]
        while stack:
            for c in children.get(stack.pop(), []):
                if c not in reached:
                    reached.add(c)
                    stack.append(c)
        if len(reached) != n:
            raise DataError("network is not connected to the root bus")
        for g in self.dgs:
            if not 0 < g.bus < n:
                raise DataError(f"DG {g.name or g.bus}: unknown or root bus {g.bus}")
            if g.p_min > g.p_max or g.q_min > g.q_max or g.p_min < 0:
                raise DataError(f"DG {g.name or g.bus}: inconsistent limits")
        for s in self.esss:
            if not 0 < s.bus < n:
                raise DataError(f"ESS {s.name or s.bus}: unknown or root bus {s.bus}")
            if not 0 < s.eta <= 1:
                raise DataError(f"ESS {s.name or s.bus}: efficiency must lie in (0, 1]")
            if s.e_min > s.e_max:
                raise DataError(f"ESS {s.name or s.bus}: e_min exceeds e_max")
        for b in self.pv_buses:
            if not 0 < b < n:
                raise DataError(f"PV at unknown or root bus {b}")
        if not self.v_min < self.v_max:
            raise DataError("v_min must be below v_max")
        if self.horizon < 1 or self.dt <= 0:
            raise DataError("horizon and dt must be positive")


@dataclass
class ForecastProfile:
    pv: np.ndarray    # (n_buses, T)
    load: np.ndarray  # (n_buses, T)

    def __post_init__(self):
        self.pv = np.asarray(self.pv, dtype=float)
        self.load = np.asarray(self.load, dtype=float)
        if self.pv.shape != self.load.shape:
            raise DataError("PV and load forecasts must share a shape")
        if np.any(self.pv < 0) or np.any(self.load < 0):
            raise DataError("forecasts must be nonnegative")


@dataclass(frozen=True)
class Component:
    series: str  # "pv" or "load"
    bus: int


def uncertain_components(net: NetworkInstance, forecast: ForecastProfile) -> list[Component]:
    """Uncertain series in vector order: PV buses first, then load buses, each by bus."""
    pv = [Component("pv", b) for b in sorted(net.pv_buses)]
    load = [Component("load", b) for b in range(1, net.n_buses) if np.any(forecast.load[b] > 0)]
    return pv + load


def nominal_vector(net: NetworkInstance, forecast: ForecastProfile) -> np.ndarray:
    comps = uncertain_components(net, forecast)
    return np.concatenate([getattr(forecast, c.series)[c.bus] for c in comps]) if comps else np.zeros(0)


# -- compilation helpers ----------------------------------------------------

class _Columns:
    def __init__(self):
        self.names: list[tuple] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.shift: list[float] = []
        self.penalty: list[bool] = []
        self.minus: dict[int, int] = {}

    def _new(self, name, lb, ub, integer, shift, penalty):
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(integer)
        self.shift.append(shift)
        self.penalty.append(penalty)
        return len(self.names) - 1

    def block(self, quantity, index, lb=0.0, ub=INF, integer=False, shift=0.0, free=False, penalty=False):
        """Allocate a block of columns; returns an integer array of shape ``index``."""
        out = np.empty(index, dtype=int)
        for key in np.ndindex(*index):
            name = (quantity,) + tuple(int(k) for k in key)
            if free:
                plus = self._new(name + ("+",), 0.0, INF, False, 0.0, False)
                self.minus[plus] = self._new(name + ("-",), 0.0, INF, False, 0.0, False)
                out[key] = plus
            else:
                out[key] = self._new(name, lb, ub, integer, shift, penalty)
        return out

    def expand(self, terms):
        for j, a in terms:
            j = int(j)
            yield j, a
            if j in self.minus:
                yield self.minus[j], -a

    @property
    def n(self) -> int:
        return len(self.names)


class _Rows:
    def __init__(self, ycols: _Columns | None = None):
        self.ycols = ycols
        self.x: list = []
        self.y: list = []
        self.u: list = []
        self.rhs: list[float] = []
        self.eq: list[bool] = []
        self.names: list[str] = []

    def add(self, name, *, x=(), y=(), u=(), rhs=0.0, eq=False):
        r = len(self.rhs)
        self.x.extend((r, int(j), float(a)) for j, a in x)
        if self.ycols is not None:
            self.y.extend((r, j, float(a)) for j, a in self.ycols.expand(y))
        self.u.extend((r, int(j), float(a)) for j, a in u)
        self.rhs.append(float(rhs))
        self.eq.append(bool(eq))
        self.names.append(name)

    @staticmethod
    def _mat(entries, m, n):
        if not entries:
            return sp.csr_matrix((m, n))
        r, c, v = zip(*entries)
        return sp.csr_matrix((v, (r, c)), shape=(m, n))

    def matrices(self, nx, ny, nu):
        m = len(self.rhs)
        return (self._mat(self.x, m, nx), self._mat(self.y, m, ny), self._mat(self.u, m, nu),
                np.array(self.rhs), np.array(self.eq, dtype=bool))


@dataclass
class Layout:
    """Column indices of the physical quantities (x and y) by device and period."""
    pG: np.ndarray
    zG: np.ndarray
    sG: np.ndarray
    pch: np.ndarray
    pdis: np.ndarray
    e: np.ndarray
    zB: np.ndarray
    pI: np.ndarray
    pE: np.ndarray
    zl: np.ndarray
    flow: np.ndarray
    y: dict
    components: list


def _topology(net):
    out_lines = {i: [] for i in range(net.n_buses)}
    in_lines = {i: [] for i in range(net.n_buses)}
    for k, ln in enumerate(net.lines):
        out_lines[ln.parent].append(k)
        in_lines[ln.child].append(k)
    return out_lines, in_lines


def compile_first_stage(net: NetworkInstance, forecast: ForecastProfile):
    """Columns and rows of the first stage; returns (columns, rows, cost, layout pieces)."""
    net.validate()
    T, dt = net.horizon, net.dt
    if forecast.load.shape != (net.n_buses, T):
        raise DataError(f"forecast shape {forecast.load.shape} does not match ({net.n_buses}, {T})")
    nG, nB, nL = len(net.dgs), len(net.esss), len(net.lines)
    cols = _Columns()
    pG = cols.block("pG", (nG, T), 0.0, INF)
    for g, dg in enumerate(net.dgs):
        for t in range(T):
            cols.ub[pG[g, t]] = dg.p_max
    zG = cols.block("zG", (nG, T), 0.0, 1.0, integer=True)
    zB = cols.block("zB", (nB, T), 0.0, 1.0, integer=True)
    zl = cols.block("zl", (T,), 0.0, 1.0, integer=True)
    sG = cols.block("sG", (nG, T), 0.0, 1.0)
    pch = cols.block("pB+", (nB, T))
    pdis = cols.block("pB-", (nB, T))
    e = cols.block("e", (nB, T))
    for b, s in enumerate(net.esss):
        for t in range(T):
            cols.ub[pch[b, t]] = s.p_charge_max
            cols.ub[pdis[b, t]] = s.p_discharge_max
            cols.lb[e[b, t]], cols.ub[e[b, t]] = s.e_min, s.e_max
    pI = cols.block("pI", (T,), 0.0, net.line_limit)
    pE = cols.block("pE", (T,), 0.0, net.line_limit)
    flow = cols.block("p_flow", (nL, T), -net.line_limit, net.line_limit)

    rows = _Rows()
    for g, dg in enumerate(net.dgs):
        for t in range(T):
            rows.add(f"dg_max[{g},{t}]", x=[(pG[g, t], 1), (zG[g, t], -dg.p_max)])
            rows.add(f"dg_min[{g},{t}]", x=[(pG[g, t], -1), (zG[g, t], dg.p_min)])
            prev = [(pG[g, t - 1], 1)] if t else []
            rows.add(f"dg_ramp_up[{g},{t}]", x=[(pG[g, t], 1)] + [(j, -a) for j, a in prev], rhs=dg.ramp_up)
            rows.add(f"dg_ramp_dn[{g},{t}]", x=[(pG[g, t], -1)] + prev, rhs=dg.ramp_down)
            zprev = [(zG[g, t - 1], -1)] if t else []
            rows.add(f"dg_startup[{g},{t}]", x=[(zG[g, t], 1), (sG[g, t], -1)] + zprev)
    for b, s in enumerate(net.esss):
        for t in range(T):
            prev = [(e[b, t - 1], -1)] if t else []
            rows.add(f"ess_energy[{b},{t}]", x=[(e[b, t], 1), (pch[b, t], -s.eta * dt),
                                               (pdis[b, t], dt / s.eta)] + prev,
                     rhs=0.0 if t else s.e_min, eq=True)
            rows.add(f"ess_charge[{b},{t}]", x=[(pch[b, t], 1), (zB[b, t], -s.p_charge_max)])
            rows.add(f"ess_discharge[{b},{t}]", x=[(pdis[b, t], 1), (zB[b, t], s.p_discharge_max)],
                     rhs=s.p_discharge_max)
    out_lines, in_lines = _topology(net)
    dg_at = {i: [g for g, dg in enumerate(net.dgs) if dg.bus == i] for i in range(net.n_buses)}
    ess_at = {i: [b for b, s in enumerate(net.esss) if s.bus == i] for i in range(net.n_buses)}
    for t in range(T):
        rows.add(f"import_max[{t}]", x=[(pI[t], 1), (zl[t], -net.line_limit)])
        rows.add(f"export_max[{t}]", x=[(pE[t], 1), (zl[t], net.line_limit)], rhs=net.line_limit)
        rows.add(f"interface[{t}]", x=[(flow[k, t], 1) for k in out_lines[0]] + [(pI[t], -1), (pE[t], 1)],
                 eq=True)
        for i in range(1, net.n_buses):
            terms = [(flow[k, t], 1) for k in out_lines[i]] + [(flow[k, t], -1) for k in in_lines[i]]
            terms += [(pG[g, t], -1) for g in dg_at[i]]
            terms += [(pdis[b, t], -1) for b in ess_at[i]] + [(pch[b, t], 1) for b in ess_at[i]]
            rows.add(f"balance[{i},{t}]", x=terms, rhs=forecast.pv[i, t] - forecast.load[i, t], eq=True)

    cost = np.zeros(cols.n)
    for g, dg in enumerate(net.dgs):
        cost[pG[g]] += dg.cost * dt
        cost[sG[g]] += dg.startup_cost
    cost[pI] += net.tariffs.import_price * dt
    cost[pE] -= net.tariffs.export_price * dt
    layout = dict(pG=pG, zG=zG, sG=sG, pch=pch, pdis=pdis, e=e, zB=zB, pI=pI, pE=pE, zl=zl, flow=flow)
    return cols, rows, cost, layout


def compile_second_stage(net: NetworkInstance, forecast: ForecastProfile, x_layout: dict,
                         slacks: bool = True):
    """Recourse columns and rows; returns (columns, rows, cost, y layout, components)."""
    T, dt = net.horizon, net.dt
    nG, nL, N = len(net.dgs), len(net.lines), net.n_buses
    S = net.base_kva
    lim = net.line_limit
    comps = uncertain_components(net, forecast)
    u_index = {(c.series, c.bus): k for k, c in enumerate(comps)}

    cols = _Columns()
    pGh = cols.block("pG^", (nG, T))
    qGh = cols.block("qG^", (nG, T))
    for g, dg in enumerate(net.dgs):
        for t in range(T):
            cols.ub[pGh[g, t]] = dg.p_max
            q_lo = min(dg.q_min, 0.0)
            cols.shift[qGh[g, t]] = q_lo
            cols.ub[qGh[g, t]] = max(dg.q_max, 0.0) - q_lo
    dG = cols.block("dpG", (nG, T), free=True)
    pIh = cols.block("pI^", (T,), ub=(1 + net.kappa_import) * lim)
    pEh = cols.block("pE^", (T,), ub=(1 + net.kappa_export) * lim)
    dI = cols.block("dpI", (T,), ub=net.kappa_import * lim)
    dE = cols.block("dpE", (T,), ub=net.kappa_export * lim)
    if slacks:
        ls = np.full((N, T), -1, dtype=int)
        cur = np.full((N, T), -1, dtype=int)
        ls[1:] = cols.block("p_ls", (N - 1, T), penalty=True)
        cur[1:] = cols.block("p_cur", (N - 1, T), penalty=True)
    fh = cols.block("p_flow^", (nL, T), shift=-lim, ub=2 * lim)
    qf = cols.block("q_flow^", (nL, T), free=True)
    V = np.full((N, T), -1, dtype=int)  # the root has no column: its voltage is the fixed base value
    V[1:] = cols.block("v^", (N - 1, T), shift=S * net.v_min, ub=S * (net.v_max - net.v_min))

    X = x_layout
    rows = _Rows(cols)
    out_lines, in_lines = _topology(net)
    dg_at = {i: [g for g, dg in enumerate(net.dgs) if dg.bus == i] for i in range(N)}
    ess_at = {i: [b for b, s in enumerate(net.esss) if s.bus == i] for i in range(N)}
    for t in range(T):
        for g, dg in enumerate(net.dgs):
            rows.add(f"dg_adjust[{g},{t}]", y=[(pGh[g, t], 1), (dG[g, t], -1)], x=[(X["pG"][g, t], -1)], eq=True)
        rows.add(f"import_adjust[{t}]", y=[(pIh[t], 1), (dI[t], -1)], x=[(X["pI"][t], -1)], eq=True)
        rows.add(f"export_adjust[{t}]", y=[(pEh[t], 1), (dE[t], -1)], x=[(X["pE"][t], -1)], eq=True)
        for g, dg in enumerate(net.dgs):
            z = X["zG"][g, t]
            rows.add(f"dg^_min[{g},{t}]", y=[(pGh[g, t], 1)], x=[(z, -dg.p_min)])
            rows.add(f"dg^_max[{g},{t}]", y=[(pGh[g, t], -1)], x=[(z, dg.p_max)])
            prev = [(pGh[g, t - 1], 1)] if t else []
            rows.add(f"dg^_ramp_up[{g},{t}]", y=[(pGh[g, t], -1)] + prev, rhs=-dg.ramp_up)
            rows.add(f"dg^_ramp_dn[{g},{t}]", y=[(pGh[g, t], 1)] + [(j, -a) for j, a in prev], rhs=-dg.ramp_down)
            rows.add(f"dg^_q_min[{g},{t}]", y=[(qGh[g, t], 1)], x=[(z, -dg.q_min)])
            rows.add(f"dg^_q_max[{g},{t}]", y=[(qGh[g, t], -1)], x=[(z, dg.q_max)])
        rows.add(f"import^_min[{t}]", y=[(pIh[t], 1)], x=[(X["pI"][t], -1)])
        rows.add(f"import^_max[{t}]", y=[(pIh[t], -1)], x=[(X["pI"][t], 1 + net.kappa_import)])
        rows.add(f"export^_min[{t}]", y=[(pEh[t], 1)], x=[(X["pE"][t], -1)])
        rows.add(f"export^_max[{t}]", y=[(pEh[t], -1)], x=[(X["pE"][t], 1 + net.kappa_export)])
        rows.add(f"interface^[{t}]", y=[(fh[k, t], 1) for k in out_lines[0]] + [(pIh[t], -1), (pEh[t], 1)],
                 eq=True)
        for i in range(1, N):
            yt = [(fh[k, t], 1) for k in out_lines[i]] + [(fh[k, t], -1) for k in in_lines[i]]
            yt += [(pGh[g, t], -1) for g in dg_at[i]]
            if slacks:
                yt += [(ls[i, t], -1), (cur[i, t], 1)]
            xt = [(X["pdis"][b, t], -1) for b in ess_at[i]] + [(X["pch"][b, t], 1) for b in ess_at[i]]
            ut = []
            if ("pv", i) in u_index:
                ut.append((u_index["pv", i] * T + t, -1))
            if ("load", i) in u_index:
                ut.append((u_index["load", i] * T + t, 1))
            rows.add(f"balance^[{i},{t}]", y=yt, x=xt, u=ut, eq=True)
            qt = [(qf[k, t], 1) for k in out_lines[i]] + [(qf[k, t], -1) for k in in_lines[i]]
            qt += [(qGh[g, t], -1) for g in dg_at[i]]
            uq = [(u_index["load", i] * T + t, net.tan_delta[i])] if ("load", i) in u_index and net.tan_delta[i] else []
            rows.add(f"q_balance^[{i},{t}]", y=qt, u=uq, eq=True)
        for k, ln in enumerate(net.lines):
            scale = 1.0 / ((1.0 - ln.phi) * net.z_base)
            yt = [(V[ln.child, t], -1), (fh[k, t], -ln.r * scale), (qf[k, t], -ln.x * scale)]
            rhs = 0.0
            if ln.parent == 0:
                rhs = -S
            else:
                yt.append((V[ln.parent, t], 1))
            rows.add(f"voltage^[{ln.parent}-{ln.child},{t}]", y=yt, rhs=rhs, eq=True)
            rows.add(f"flow^_max[{k},{t}]", y=[(fh[k, t], -1)], rhs=-lim)
        for i in range(1, N):
            rows.add(f"v^_max[{i},{t}]", y=[(V[i, t], -1)], rhs=-S * net.v_max)
    cost = np.zeros(cols.n)
    for g, dg in enumerate(net.dgs):
        cost[dG[g]] += dg.cost * dt
        for plus in dG[g]:
            cost[cols.minus[int(plus)]] -= dg.cost * dt
    cost[dI] += net.tariffs.import_price_rt * dt
    cost[dE] -= net.tariffs.export_price_rt * dt
    if slacks:
        cost[ls[1:]] += net.shed_penalty * dt
        cost[cur[1:]] += net.curtail_penalty * dt
    ylay = dict(pG=pGh, qG=qGh, dG=dG, pI=pIh, pE=pEh, dI=dI, dE=dE, flow=fh, q_flow=qf, v=V)
    if slacks:
        ylay.update(ls=ls, cur=cur)
    return cols, rows, cost, ylay, comps


def compile_network(net: NetworkInstance, forecast: ForecastProfile, slacks: bool = True):
    """Compile both stages into compact form; returns ``(problem, layout)``."""
    xcols, xrows, c1, xlay = compile_first_stage(net, forecast)
    ycols, yrows, c2, ylay, comps = compile_second_stage(net, forecast, xlay, slacks=slacks)
    nx, ny = xcols.n, ycols.n
    nu = len(comps) * net.horizon
    A, _, _, b, a_eq = xrows.matrices(nx, 0, 0)
    B1, B2, E, d, eq = yrows.matrices(nx, ny, nu)
    shift = np.array(ycols.shift)
    d = d - B2 @ shift
    pairs = np.array(sorted(ycols.minus.items()), dtype=int).reshape(-1, 2)
    u_names = tuple((c.series, c.bus, t) for c in comps for t in range(net.horizon))
    problem = CompactTwoStageProblem(
        A=A, b=b, a_eq=a_eq, x_lb=np.array(xcols.lb), x_ub=np.array(xcols.ub),
        x_integer=np.array(xcols.integer, dtype=bool), c1=c1,
        B1=B1, B2=B2, E=E, d=d, eq=eq, c2=c2,
        x_names=tuple(xcols.names), y_names=tuple(ycols.names), u_names=u_names,
        row_names=tuple(yrows.names), y_shift=shift, y_ub=np.array(ycols.ub), free_pairs=pairs,
        penalty=np.array(ycols.penalty, dtype=bool),
        meta={"horizon": net.horizon, "n_buses": net.n_buses, "dt": net.dt},
    )
    layout = Layout(**xlay, y=ylay, components=comps)
    return problem, layout


def deterministic_baseline(problem: CompactTwoStageProblem, nominal, gap: float = 1e-6):
    """Both stages as one MILP with the uncertainty fixed to its nominal value."""
    model, xv, eta, _ = scenario_program(problem, [np.asarray(nominal, dtype=float)], mode="max")
    out = model.solve(gap=gap)
    if out.status is not Status.OPTIMAL:
        raise DataError(f"deterministic problem is {out.status.value}")
    return out.objective, out.values[xv]


# -- file formats -------------------------------------------------------------

def network_to_json(net: NetworkInstance) -> dict:
    return {
        "buses": [{"id": i, "tan_delta": float(net.tan_delta[i]), "pv": i in net.pv_buses}
                  for i in range(net.n_buses)],
        "lines": [asdict(ln) for ln in net.lines],
        "dgs": [asdict(g) for g in net.dgs],
        "esss": [asdict(s) for s in net.esss],
        "tariffs": {k: np.asarray(v).tolist() for k, v in asdict(net.tariffs).items()},
        "penalties": {"curtail": net.curtail_penalty, "shed": net.shed_penalty},
        "exchange": {"kappa_import": net.kappa_import, "kappa_export": net.kappa_export,
                     "line_limit": net.line_limit},
        "voltage": {"v_min": net.v_min, "v_max": net.v_max, "base_kv": net.base_kv, "base_kva": net.base_kva},
        "horizon": {"T": net.horizon, "dt": net.dt},
        "notes": list(net.notes),
    }


def network_from_json(data: dict) -> NetworkInstance:
    try:
        buses = sorted(data["buses"], key=lambda b: b["id"])
        n = len(buses)
        if [b["id"] for b in buses] != list(range(n)):
            raise DataError("bus ids must be 0..n-1")
        T = int(data["horizon"]["T"])
        net = NetworkInstance(
            n_buses=n,
            lines=[Line(**ln) for ln in data["lines"]],
            dgs=[DG(**g) for g in data.get("dgs", [])],
            esss=[ESS(**s) for s in data.get("esss", [])],
            tariffs=Tariffs(**{k: np.asarray(v, dtype=float) for k, v in data["tariffs"].items()}),
            curtail_penalty=float(data["penalties"]["curtail"]),
            shed_penalty=float(data["penalties"]["shed"]),
            kappa_import=float(data["exchange"]["kappa_import"]),
            kappa_export=float(data["exchange"]["kappa_export"]),
            line_limit=float(data["exchange"]["line_limit"]),
            horizon=T, dt=float(data["horizon"].get("dt", 1.0)),
            v_min=float(data["voltage"]["v_min"]), v_max=float(data["voltage"]["v_max"]),
            base_kv=float(data["voltage"].get("base_kv", 12.66)),
            base_kva=float(data["voltage"].get("base_kva", 10000.0)),
            tan_delta=np.array([float(b.get("tan_delta", 0.0)) for b in buses]),
            pv_buses=tuple(b["id"] for b in buses if b.get("pv")),
            notes=list(data.get("notes", [])),
        )
    except KeyError as exc:
        raise DataError(f"network file is missing section or field {exc}") from None
    except TypeError as exc:
        raise DataError(f"network file has an unexpected field: {exc}") from None
    net.validate()
    return net


def load_network(path) -> NetworkInstance:
    return network_from_json(json.loads(Path(path).read_text()))


def save_network(net: NetworkInstance, path) -> None:
    Path(path).write_text(json.dumps(network_to_json(net), indent=1))


def _read_series_csv(path, key_cols):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for k in key_cols:
            if k not in header:
                raise DataError(f"{path}: missing column '{k}'")
        tcols = [h for h in header if h not in key_cols]
        if not tcols or any(h != f"t{k + 1}" for k, h in enumerate(tcols)):
            raise DataError(f"{path}: period columns must be named t1..tT after {', '.join(key_cols)}")
        idx = [header.index(k) for k in key_cols]
        tidx = [header.index(h) for h in tcols]
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            keys = []
            for k, i in zip(key_cols, idx):
                v = row[i].strip()
                if k in ("bus", "sample"):
                    try:
                        v = int(v)
                    except ValueError:
                        raise DataError(f"{path}: row {lineno}, column '{k}': not an integer") from None
                elif k == "series" and v not in ("pv", "load"):
                    raise DataError(f"{path}: row {lineno}, column 'series': expected pv or load")
                keys.append(v)
            try:
                vals = np.array([float(row[i]) for i in tidx])
            except ValueError:
                raise DataError(f"{path}: row {lineno}: non-numeric period value") from None
            records.append((tuple(keys), vals))
    return records, len(tcols)


def load_forecast(path, n_buses: int) -> ForecastProfile:
    records, T = _read_series_csv(path, ["bus", "series"])
    pv = np.zeros((n_buses, T))
    load = np.zeros((n_buses, T))
    for (bus, series), vals in records:
        if not 0 <= bus < n_buses:
            raise DataError(f"{path}: unknown bus {bus}")
        (pv if series == "pv" else load)[bus] = vals
    return ForecastProfile(pv, load)


def save_forecast(forecast: ForecastProfile, path) -> None:
    T = forecast.load.shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus", "series"] + [f"t{t + 1}" for t in range(T)])
        for series in ("pv", "load"):
            arr = getattr(forecast, series)
            for bus in range(arr.shape[0]):
                if np.any(arr[bus] > 0):
                    w.writerow([bus, series] + [f"{v:.6g}" for v in arr[bus]])


def load_history(path) -> dict[tuple[str, int], np.ndarray]:
    """Historical CSV with columns sample, bus, series, t1..tT -> {(series, bus): (m, T)}."""
    records, _ = _read_series_csv(path, ["sample", "bus", "series"])
    out: dict[tuple[str, int], dict[int, np.ndarray]] = {}
    for (sample, bus, series), vals in records:
        out.setdefault((series, bus), {})[sample] = vals
    return {k: np.vstack([v[s] for s in sorted(v)]) for k, v in out.items()}


def save_history(history: dict[tuple[str, int], np.ndarray], path) -> None:
    T = next(iter(history.values())).shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "bus", "series"] + [f"t{t + 1}" for t in range(T)])
        for (series, bus), arr in sorted(history.items(), key=lambda kv: (kv[0][0] != "pv", kv[0][1])):
            for s, row in enumerate(arr):
                w.writerow([s, bus, series] + [f"{v:.6g}" for v in row])
