"""Confidence-level-driven uncertainty sets.

Per uncertain coordinate a band of CDFs is built around the empirical CDF
of its historical samples.  The shortest interval with guaranteed coverage
``alpha`` gives bounds lb(alpha), ub(alpha); these are tabulated on an alpha
grid and made monotone so the sets are nested.  The generalized set then
moves away from the forecast u~ toward those bounds under a budget Gamma:

    u = u~ - e_minus * (u~ - lb) + e_plus * (ub - u~),
    0 <= e <= 1,   sum(e_minus + e_plus) / |T| <= Gamma.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .solver import Model, Status

log = logging.getLogger(__name__)

MIN_SAMPLES = 30
DEFAULT_STEP = 0.001


class UncertaintyError(ValueError):
    pass


@dataclass
class CdfBand:
    """Empirical CDF bands for each coordinate; ``samples`` is (n_u, m), sorted per row."""
    samples: np.ndarray
    band_width: np.ndarray

    @classmethod
    def build(cls, samples, band_width=None) -> "CdfBand":
        s = np.atleast_2d(np.asarray(samples, dtype=float))
        m = s.shape[1]
        if m < MIN_SAMPLES:
            raise UncertaintyError(f"at least {MIN_SAMPLES} samples per component are required, got {m}")
        w = 1.0 / math.sqrt(m) if band_width is None else band_width
        w = np.broadcast_to(np.asarray(w, dtype=float), (s.shape[0],)).copy()
        if np.any(w < 0) or np.any(w >= 0.5):
            raise UncertaintyError("band width must lie in [0, 0.5)")
        return cls(np.sort(s, axis=1), w)

    @property
    def m(self) -> int:
        return self.samples.shape[1]

    def empirical(self, k: int, v, left: bool = False) -> np.ndarray:
        side = "left" if left else "right"
        return np.searchsorted(self.samples[k], v, side=side) / self.m

    def lower(self, k: int, v) -> np.ndarray:
        return np.maximum(self.empirical(k, v) - self.band_width[k], 0.0)

    def upper(self, k: int, v) -> np.ndarray:
        return np.minimum(self.empirical(k, v) + self.band_width[k], 1.0)

    def coverage(self, k: int, lo: float, hi: float) -> float:
        """Guaranteed probability of [lo, hi]: F_lower(hi) - F_upper(lo-)."""
        up_left = min(self.empirical(k, lo, left=True) + self.band_width[k], 1.0)
        return float(self.lower(k, hi) - up_left)

    def max_coverage(self, k: int) -> float:
        return max(0.0, 1.0 - 2.0 * self.band_width[k])


def _shortest(values: np.ndarray, counts: np.ndarray, m: int, w: float, alphas: np.ndarray):
    """Shortest guaranteed intervals over the unique grid ``values`` for every alpha.

    Returns (lo, hi, feasible) arrays of length len(alphas).
    """
    K = values.size
    cum = np.cumsum(counts)               # #samples <= values[k]
    prev = np.concatenate([[0], cum[:-1]])  # #samples < values[k]
    b = np.minimum(prev / m + w, 1.0)     # upper CDF just left of each candidate lower end
    need = (alphas[:, None] + b[None, :] + w) * m - 1e-9  # required cum at upper end
    j = np.searchsorted(cum, need, side="left")         # (n_alpha, K)
    i = np.arange(K)[None, :]
    j = np.maximum(j, i)
    ok = j < K
    jj = np.minimum(j, K - 1)
    width = np.where(ok, values[jj] - values[i], np.inf)
    cov = np.where(ok, np.maximum(cum[jj] / m - w, 0.0) - b[None, :], -np.inf)
    # lexicographic: width asc, coverage desc, lower index asc
    best = np.lexsort((np.broadcast_to(i, width.shape), -cov, width), axis=1)[:, 0]
    rows = np.arange(alphas.size)
    feasible = ok[rows, best]
    return values[best], values[jj[rows, best]], feasible


def shortest_interval(band: CdfBand, k: int, alpha: float) -> tuple[float, float]:
    """Minimum-width interval of coordinate ``k`` with guaranteed coverage >= alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise UncertaintyError("alpha must lie in [0, 1]")
    vals, counts = np.unique(band.samples[k], return_counts=True)
    lo, hi, ok = _shortest(vals, counts, band.m, band.band_width[k], np.array([alpha]))
    if not ok[0]:
        log.warning("coverage %.3f is not achievable for component %d; using the full sample range", alpha, k)
        return float(vals[0]), float(vals[-1])
    return float(lo[0]), float(hi[0])


def data_hash(samples: np.ndarray, band_width, step: float) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(samples, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(band_width, dtype=np.float64).tobytes())
    h.update(repr(float(step)).encode())
    return h.hexdigest()


@dataclass
class BoundCurves:
    """lb(alpha), ub(alpha) on a uniform grid with step ``step``; arrays are (n_grid, n_u)."""
    step: float
    lb: np.ndarray
    ub: np.ndarray
    nominal: np.ndarray
    horizon: int
    names: tuple = ()
    key: str = ""
    unreachable: np.ndarray | None = None  # first grid index at which each coordinate fell back

    @property
    def n_u(self) -> int:
        return self.nominal.size

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.lb.shape[0]) * self.step

    def index(self, alpha: float) -> int:
        if not -1e-12 <= alpha <= 1.0 + 1e-12:
            raise UncertaintyError(f"alpha {alpha} outside [0, 1]")
        return int(min(math.floor(alpha / self.step + 1e-9), self.lb.shape[0] - 1))

    def snap(self, alpha: float) -> float:
        return self.index(alpha) * self.step

    def at(self, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        k = self.index(alpha)
        return self.lb[k], self.ub[k]

    @classmethod
    def box_family(cls, nominal, horizon: int, step: float = DEFAULT_STEP, names=()) -> "BoundCurves":
        """Symmetric multiplicative boxes u~(1 -/+ delta) indexed by delta in [0, 1]."""
        nominal = np.asarray(nominal, dtype=float)
        grid = np.round(np.arange(int(round(1 / step)) + 1) * step, 12)
        lb = nominal[None, :] * (1 - grid[:, None])
        ub = nominal[None, :] * (1 + grid[:, None])
        lo, hi = np.minimum(lb, ub), np.maximum(lb, ub)
        return cls(step, lo, hi, nominal, horizon, tuple(names), key="box")

    def to_json(self) -> dict:
        return {"format": "cligdt-curves", "key": self.key, "step": self.step, "horizon": self.horizon,
                "names": [list(n) for n in self.names], "nominal": self.nominal.tolist(),
                "lb": self.lb.tolist(), "ub": self.ub.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "BoundCurves":
        if data.get("format") != "cligdt-curves":
            raise UncertaintyError("not a bound-curve cache file")
        return cls(float(data["step"]), np.asarray(data["lb"], float), np.asarray(data["ub"], float),
                   np.asarray(data["nominal"], float), int(data["horizon"]),
                   tuple(tuple(n) for n in data["names"]), data["key"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "BoundCurves":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_bound_curves(band: CdfBand, nominal, horizon: int, step: float = DEFAULT_STEP,
                       names=()) -> BoundCurves:
    """Tabulate shortest intervals on the alpha grid, then enforce nestedness."""
    if not 0 < step <= 0.5:
        raise UncertaintyError("alpha step must lie in (0, 0.5]")
    nominal = np.asarray(nominal, dtype=float)
    n_u = band.samples.shape[0]
    if nominal.size != n_u:
        raise UncertaintyError("nominal vector and band dimensions differ")
    n_grid = int(round(1.0 / step)) + 1
    alphas = np.minimum(np.arange(n_grid) * step, 1.0)
    lb = np.empty((n_grid, n_u))
    ub = np.empty((n_grid, n_u))
    unreachable = np.full(n_u, n_grid)
    for k in range(n_u):
        vals, counts = np.unique(band.samples[k], return_counts=True)
        lo, hi, ok = _shortest(vals, counts, band.m, band.band_width[k], alphas)
        lo[~ok], hi[~ok] = vals[0], vals[-1]
        if not ok.all():
            unreachable[k] = int(np.argmin(ok))
        lb[:, k], ub[:, k] = lo, hi
    if np.any(unreachable < n_grid):
        a = alphas[unreachable.min()]
        log.warning("coverage above %.3f is not achievable under the band for some components; "
                    "those use the full sample range", a)
    lb = np.minimum.accumulate(lb, axis=0)
    ub = np.maximum.accumulate(ub, axis=0)
    key = data_hash(band.samples, band.band_width, step)
    return BoundCurves(step, lb, ub, nominal, horizon, tuple(names), key, unreachable)


def history_matrix(history: dict, components, horizon: int) -> np.ndarray:
    """Stack historical samples into (n_u, m) following the uncertain-vector layout."""
    rows = []
    m = None
    for c in components:
        key = (c.series, c.bus)
        if key not in history:
            raise UncertaintyError(f"no historical data for {c.series} at bus {c.bus}")
        arr = history[key]
        if arr.shape[1] != horizon:
            raise UncertaintyError(f"history for {c.series} at bus {c.bus} has {arr.shape[1]} periods, "
                                   f"expected {horizon}")
        if m is not None and arr.shape[0] != m:
            raise UncertaintyError("all components must have the same number of samples")
        m = arr.shape[0]
        rows.extend(arr.T)
    return np.array(rows)


def load_or_build_curves(samples, nominal, horizon, band_width=None, step=DEFAULT_STEP,
                         names=(), cache_dir=None) -> BoundCurves:
    band = CdfBand.build(samples, band_width)
    key = data_hash(band.samples, band.band_width, step)
    path = Path(cache_dir) / f"curves-{key[:16]}.json" if cache_dir else None
    if path is not None and path.exists():
        curves = BoundCurves.load(path)
        if curves.key == key and np.array_equal(curves.nominal, np.asarray(nominal, float)):
            return curves
    curves = build_bound_curves(band, nominal, horizon, step, names)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        curves.save(path)
    return curves


def coverage_table(curves: BoundCurves, samples, alphas=(0.25, 0.5, 0.75, 0.9)) -> list[dict]:
    """Fraction of ``samples`` (n_u, m) inside [lb(alpha), ub(alpha)] per coordinate."""
    samples = np.atleast_2d(np.asarray(samples, float))
    out = []
    for a in alphas:
        lb, ub = curves.at(a)
        inside = (samples >= lb[:, None] - 1e-12) & (samples <= ub[:, None] + 1e-12)
        frac = inside.mean(axis=1)
        out.append({"alpha": float(a), "min": float(frac.min()), "mean": float(frac.mean()),
                    "per_component": frac.tolist()})
    return out


# -- generalized set -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GeneralizedSet:
    alpha: float
    gamma: float
    nominal: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    horizon: int

    @property
    def n_u(self) -> int:
        return self.nominal.size

    @property
    def down(self) -> np.ndarray:
        return self.nominal - self.lb

    @property
    def up(self) -> np.ndarray:
        return self.ub - self.nominal

    @property
    def budget(self) -> float:
        """Total allowed deviation units sum(e_minus + e_plus)."""
        return self.gamma * self.horizon

    @property
    def pinned(self) -> np.ndarray:
        return (self.down <= 0) & (self.up <= 0)

    def h_rep(self):
        """Lifted H-representation over z = (u, e_minus, e_plus).

        Returns (A_eq, b_eq, A_ub, b_ub, lo, hi): A_eq z = b_eq, A_ub z <= b_ub, lo <= z <= hi.
        """
        n = self.n_u
        I = sp.identity(n, format="csr")
        A_eq = sp.hstack([I, sp.diags(self.down), -sp.diags(self.up)], format="csr")
        b_eq = self.nominal.copy()
        A_ub = sp.csr_matrix(np.concatenate([np.zeros(n), np.full(2 * n, 1.0 / self.horizon)])[None, :])
        b_ub = np.array([self.gamma])
        lo = np.concatenate([self.lb, np.zeros(2 * n)])
        hi = np.concatenate([self.ub, np.ones(2 * n)])
        return A_eq, b_eq, A_ub, b_ub, lo, hi

    def gauge(self, u) -> float:
        """Smallest sum(e_minus + e_plus) that represents ``u``; inf outside the box."""
        u = np.asarray(u, dtype=float)
        if np.any(u < self.lb - 1e-9) or np.any(u > self.ub + 1e-9):
            return math.inf
        dev = u - self.nominal
        g = np.zeros_like(dev)
        lo, hi = dev < 0, dev > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            g[lo] = -dev[lo] / self.down[lo]
            g[hi] = dev[hi] / self.up[hi]
        g[~np.isfinite(g)] = 0.0
        return float(g.sum())

    def contains(self, u, tol: float = 1e-7) -> bool:
        return self.gauge(u) <= self.budget + tol * max(1.0, self.budget)

    def box_contains(self, u, tol: float = 1e-7) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lb - tol) and np.all(u <= self.ub + tol))


def instantiate(curves: BoundCurves, alpha: float, gamma: float) -> GeneralizedSet:
    """U(alpha) under budget gamma; the box is hulled with the forecast so it always contains it."""
    if gamma < 0:
        raise UncertaintyError("gamma must be nonnegative")
    lb, ub = curves.at(alpha)
    nom = curves.nominal
    return GeneralizedSet(curves.snap(alpha), float(gamma), nom.copy(),
                          np.minimum(lb, nom), np.maximum(ub, nom), curves.horizon)


MAX_VERTEX_DIM = 12


def vertices(uset: GeneralizedSet, max_dim: int = MAX_VERTEX_DIM) -> np.ndarray:
    """Exact vertex list of the projected set, one vertex per row.

    The projection is the box intersected with a separable gauge ball, so every
    vertex puts each free coordinate at a full deviation, at the forecast, or
    (for at most one coordinate) at the fractional remainder of the budget.
    """
    if uset.n_u > max_dim:
        raise UncertaintyError(f"vertex enumeration is limited to {max_dim} dimensions, got {uset.n_u}")
    down, up = uset.down, uset.up
    free = np.flatnonzero(~uset.pinned)
    n = free.size
    B = uset.budget
    tol = 1e-9
    kfull = min(int(math.floor(B + tol)), n)
    frac = B - kfull if kfull < n else 0.0
    exact = abs(frac) <= tol
    frac_ok = tol < frac < 1 - tol

    def options(i, allow_zero):
        opts = []
        if down[i] > 0:
            opts.append(("full", -down[i]))
        if up[i] > 0:
            opts.append(("full", up[i]))
        one_sided = down[i] <= 0 or up[i] <= 0
        if allow_zero or one_sided:
            opts.append(("zero", 0.0))
        return opts

    points = []

    def emit(devs):
        u = uset.nominal.copy()
        for i, v in devs.items():
            u[i] += v
        points.append(u)

    # coordinates at full side / forecast, budget slack or exactly active
    for k in range(0, kfull + 1):
        budget_active = exact and k == kfull
        for S in itertools.combinations(range(n), k):
            rest = [j for j in range(n) if j not in S]
            full_opts = [[v for kind, v in options(free[i], False) if kind == "full"] for i in S]
            zero_ok = [budget_active or down[free[j]] <= 0 or up[free[j]] <= 0 for j in rest]
            if not all(zero_ok):
                continue
            for choice in itertools.product(*full_opts):
                emit({free[i]: v for i, v in zip(S, choice)})
    # one fractional coordinate with the remainder
    if frac_ok:
        for S in itertools.combinations(range(n), kfull):
            rest = [j for j in range(n) if j not in S]
            full_opts = [[v for kind, v in options(free[i], False) if kind == "full"] for i in S]
            for f in rest:
                fopts = []
                if down[free[f]] > 0:
                    fopts.append(-frac * down[free[f]])
                if up[free[f]] > 0:
                    fopts.append(frac * up[free[f]])
                for choice in itertools.product(*full_opts):
                    for fv in fopts:
                        d = {free[i]: v for i, v in zip(S, choice)}
                        d[free[f]] = fv
                        emit(d)
    if not points:
        return uset.nominal[None, :].copy()
    return _dedupe(np.array(points))


def _dedupe(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keys = np.round(points / tol).astype(np.int64) if np.abs(points).max() < 1e9 else points
    _, idx = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(idx)]


def support(uset: GeneralizedSet, direction) -> tuple[float, np.ndarray]:
    """max direction'u over U(alpha) via an LP on the lifted set.

    Among maximizers the one with the least total deviation is returned, so a
    zero direction gives the forecast.
    """
    g = np.asarray(direction, dtype=float)
    n = uset.n_u
    if n == 0:
        return 0.0, np.zeros(0)
    A_eq, b_eq, A_ub, b_ub, lo, hi = uset.h_rep()
    m = Model("max", name="support")
    z = m.add_vars(3 * n, lo, hi)
    m.add_rows(A_eq, "=", b_eq)
    m.add_rows(A_ub, "<=", b_ub)
    m.set_objective(np.concatenate([g, np.zeros(2 * n)]))
    out = m.solve()
    if out.status is not Status.OPTIMAL:
        raise RuntimeError(f"support LP ended with status {out.status.value}")
    value = out.objective
    scale = max(1.0, abs(value))
    m.add_rows(sp.csr_matrix(np.concatenate([g, np.zeros(2 * n)])[None, :]), ">=", [value - 1e-9 * scale])
    m.set_objective(np.concatenate([np.zeros(n), np.ones(2 * n)]), sense="min")
    out2 = m.solve()
    u = out2.values[z[:n]] if out2.status is Status.OPTIMAL else out.values[z[:n]]
    return float(g @ u), u


def support_greedy(uset: GeneralizedSet, direction) -> tuple[float, np.ndarray]:
    """Closed-form support: a fractional knapsack over per-coordinate gains."""
    g = np.asarray(direction, dtype=float)
    gain_dn = -g * uset.down
    gain_up = g * uset.up
    side_up = gain_up >= gain_dn
    gain = np.where(side_up, gain_up, gain_dn)
    order = np.argsort(-gain, kind="stable")
    u = uset.nominal.copy()
    left = uset.budget
    for i in order:
        if gain[i] <= 0 or left <= 0:
            break
        t = min(1.0, left)
        u[i] += t * (uset.up[i] if side_up[i] else -uset.down[i])
        left -= t
    return float(g @ u), u


def _ray_limit(uset: GeneralizedSet, u: np.ndarray, d: np.ndarray) -> float:
    """Largest t >= 0 with u + t d inside the set (u assumed inside)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t_box = np.where(d > 0, (uset.ub - u) / d, np.where(d < 0, (uset.lb - u) / d, np.inf))
    t_max = float(max(np.min(t_box), 0.0))
    B = uset.budget
    # gauge along the ray is piecewise linear and convex; walk its breakpoints
    dev = u - uset.nominal
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_up = np.where(uset.up > 0, 1.0 / uset.up, 0.0)
        inv_dn = np.where(uset.down > 0, 1.0 / uset.down, 0.0)
        g0 = float(np.sum(np.where(dev > 0, dev * inv_up, -dev * inv_dn)))
        moving_up = (dev > 0) | ((dev == 0) & (d > 0))
        slope_i = np.where(moving_up, d * inv_up, -d * inv_dn)
        crosses = ((dev > 0) & (d < 0)) | ((dev < 0) & (d > 0))
        t_cross = np.where(crosses, -dev / d, np.inf)
    jump = np.where(crosses, np.abs(d) * (inv_up + inv_dn), 0.0)
    order = np.argsort(t_cross)
    t_prev, h, s = 0.0, g0, float(slope_i.sum())
    for k in order:
        tk = t_cross[k]
        if not np.isfinite(tk) or tk >= t_max:
            break
        if s > 0 and h + s * (tk - t_prev) > B:
            break
        h += s * (tk - t_prev)
        s += jump[k]
        t_prev = tk
    if s > 1e-15:
        t_max = min(t_max, t_prev + max(B - h, 0.0) / s)
    return t_max


def hit_and_run(uset: GeneralizedSet, count: int, rng: np.random.Generator, burn_in: int | None = None,
                thin: int | None = None, start=None) -> np.ndarray:
    """Approximately uniform samples from the projected set (free coordinates only)."""
    free = np.flatnonzero(~uset.pinned)
    n = free.size
    out = np.tile(uset.nominal, (count, 1))
    if n == 0 or uset.budget <= 0:
        return out
    min_chain = 100 * uset.n_u
    burn_in = min_chain if burn_in is None else burn_in
    if burn_in < min_chain:
        raise UncertaintyError(f"burn-in {burn_in} is below the mixing guard {min_chain} (100 * n_u)")
    thin = max(n, 1) if thin is None else thin
    u = uset.nominal.copy() if start is None else np.asarray(start, dtype=float).copy()
    step = 0
    k = 0
    total = burn_in + count * thin
    while step < total:
        d = np.zeros(uset.n_u)
        d[free] = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        t_hi = _ray_limit(uset, u, d)
        t_lo = -_ray_limit(uset, u, -d)
        if t_hi > t_lo:
            u = u + rng.uniform(t_lo, t_hi) * d
            u = np.clip(u, uset.lb, uset.ub)
        step += 1
        if step > burn_in and (step - burn_in) % thin == 0:
            out[k] = u
            k += 1
    return out
