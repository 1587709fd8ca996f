"""Built-in network instances and synthetic profile generators."""
from __future__ import annotations

import numpy as np

from .network import DG, ESS, ForecastProfile, Line, NetworkInstance, Tariffs

# IEEE 33-bus feeder (Baran & Wu), buses numbered from 1; r, x in ohm
IEEE33_LINES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864), (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188), (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400), (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450), (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373), (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337), (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]
# peak active / reactive demand per bus (kW, kvar)
IEEE33_LOADS = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20), 7: (200, 100), 8: (200, 100),
    9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10),
    16: (60, 20), 17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40), 22: (90, 40),
    23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25), 27: (60, 25), 28: (60, 20), 29: (120, 70),
    30: (200, 600), 31: (150, 70), 32: (210, 100), 33: (60, 40),
}
# (p_max, p_min, ramp, q_max, q_min, cost $/kWh, startup $)
DG_TABLE = [
    (400, 50, 100, 320, -200, 2.0, 200),
    (500, 80, 150, 400, -350, 2.5, 400),
    (800, 100, 200, 700, -500, 3.5, 700),
    (1200, 120, 250, 1100, -800, 4.0, 1000),
]
# (p_max charge/discharge, e_max, e_min, eta)
ESS_TABLE = [(120, 700, 140, 0.9), (200, 800, 160, 0.9), (250, 900, 180, 0.9), (280, 1000, 200, 0.9)]

IEEE33_DG_BUSES = (6, 13, 24, 29)
IEEE33_ESS_BUSES = (9, 17, 21, 32)
IEEE33_PV = {12: 400.0, 18: 300.0, 22: 300.0, 25: 500.0, 33: 300.0}

# 24-hour shapes (fraction of peak)
LOAD_SHAPE = np.array([0.62, 0.58, 0.56, 0.55, 0.57, 0.63, 0.72, 0.82, 0.88, 0.91, 0.93, 0.94,
                       0.92, 0.91, 0.90, 0.91, 0.94, 0.98, 1.00, 0.98, 0.93, 0.85, 0.76, 0.68])
PV_SHAPE = np.array([0, 0, 0, 0, 0, 0.02, 0.10, 0.25, 0.43, 0.60, 0.74, 0.83,
                     0.86, 0.82, 0.72, 0.57, 0.39, 0.20, 0.06, 0, 0, 0, 0, 0], dtype=float)
IMPORT_PRICE = np.array([1.8] * 7 + [3.0] * 4 + [4.5] * 4 + [3.0] * 2 + [4.5] * 4 + [3.0] * 2 + [1.8])


def _resample(shape: np.ndarray, T: int) -> np.ndarray:
    if T == shape.size:
        return shape.copy()
    grid = (np.arange(T) + 0.5) * shape.size / T
    return np.interp(grid, np.arange(shape.size) + 0.5, shape)


def _tariffs(price: np.ndarray) -> Tariffs:
    return Tariffs(import_price=price, export_price=0.4 * price,
                   import_price_rt=1.2 * price, export_price_rt=0.8 * 0.4 * price)


def ieee33(horizon: int = 24) -> tuple[NetworkInstance, ForecastProfile]:
    """IEEE 33-bus feeder with four DGs, four ESSs and five PV plants."""
    n = 33
    lines = [Line(a - 1, b - 1, r, x) for a, b, r, x in IEEE33_LINES]
    dgs = [DG(bus - 1, pm, pn, rr, rr, qm, qn, c, cu, name=f"DG{k + 1}")
           for k, (bus, (pm, pn, rr, qm, qn, c, cu)) in enumerate(zip(IEEE33_DG_BUSES, DG_TABLE))]
    esss = [ESS(bus - 1, p, p, e_hi, e_lo, eta, name=f"ESS{k + 1}")
            for k, (bus, (p, e_hi, e_lo, eta)) in enumerate(zip(IEEE33_ESS_BUSES, ESS_TABLE))]
    tan = np.zeros(n)
    for bus, (p, q) in IEEE33_LOADS.items():
        tan[bus - 1] = q / p
    net = NetworkInstance(
        n_buses=n, lines=lines, dgs=dgs, esss=esss,
        tariffs=_tariffs(_resample(IMPORT_PRICE, horizon)),
        curtail_penalty=5.0, shed_penalty=20.0, kappa_import=0.2, kappa_export=0.2,
        line_limit=3500.0, horizon=horizon, dt=24.0 / horizon,
        tan_delta=tan, pv_buses=tuple(b - 1 for b in IEEE33_PV),
        notes=["line limit 3.5 read as 3.5 MW = 3500 kW",
               "penalties, tariffs, PV sizes and device placement are illustrative values"],
    )
    load = np.zeros((n, horizon))
    pv = np.zeros((n, horizon))
    shape_l, shape_pv = _resample(LOAD_SHAPE, horizon), _resample(PV_SHAPE, horizon)
    for bus, (p, _) in IEEE33_LOADS.items():
        load[bus - 1] = p * shape_l
    for bus, cap in IEEE33_PV.items():
        pv[bus - 1] = cap * shape_pv
    return net, ForecastProfile(pv, load)


def six_bus(horizon: int = 6) -> tuple[NetworkInstance, ForecastProfile]:
    """Small feeder used as the cut-recycling benchmark."""
    lines = [Line(0, 1, 0.10, 0.05), Line(1, 2, 0.40, 0.20), Line(2, 3, 0.35, 0.20),
             Line(1, 4, 0.50, 0.30), Line(4, 5, 0.60, 0.45)]
    pm, pn, rr, qm, qn, c, cu = DG_TABLE[0]
    pm2, pn2, rr2, qm2, qn2, c2, cu2 = DG_TABLE[2]
    dgs = [DG(3, pm, pn, rr, rr, qm, qn, c, cu, "DG1"), DG(5, pm2, pn2, rr2, rr2, qm2, qn2, c2, cu2, "DG2")]
    p, e_hi, e_lo, eta = ESS_TABLE[1]
    esss = [ESS(2, p, p, e_hi, e_lo, eta, "ESS1")]
    tan = np.array([0, 0.5, 0.45, 0.5, 0.4, 0.5])
    net = NetworkInstance(
        n_buses=6, lines=lines, dgs=dgs, esss=esss,
        tariffs=_tariffs(_resample(IMPORT_PRICE, horizon)),
        curtail_penalty=5.0, shed_penalty=20.0, kappa_import=0.2, kappa_export=0.2,
        line_limit=1500.0, horizon=horizon, dt=24.0 / horizon, tan_delta=tan, pv_buses=(2, 5),
    )
    peak = np.array([0, 300, 250, 400, 200, 350], dtype=float)
    sl, spv = _resample(LOAD_SHAPE, horizon), _resample(PV_SHAPE, horizon)
    load = peak[:, None] * sl[None, :]
    pv = np.zeros((6, horizon))
    pv[2] = 300 * spv
    pv[5] = 400 * spv
    return net, ForecastProfile(pv, load)


def two_bus(horizon: int = 2) -> tuple[NetworkInstance, ForecastProfile]:
    """Root plus one load bus with a DG and a PV plant; the smallest useful case."""
    net = NetworkInstance(
        n_buses=2, lines=[Line(0, 1, 0.2, 0.1, phi=0.0)],
        dgs=[DG(1, 100.0, 10.0, 100.0, 100.0, 80.0, -50.0, 2.0, 5.0, "DG1")], esss=[],
        tariffs=Tariffs(np.full(horizon, 3.0), np.full(horizon, 1.0), np.full(horizon, 3.6), np.full(horizon, 0.8)),
        curtail_penalty=5.0, shed_penalty=20.0, kappa_import=0.2, kappa_export=0.2,
        line_limit=100.0, horizon=horizon, dt=1.0, tan_delta=np.array([0.0, 0.3]), pv_buses=(1,),
    )
    load = np.zeros((2, horizon))
    pv = np.zeros((2, horizon))
    load[1] = 120.0
    pv[1] = 30.0
    return net, ForecastProfile(pv, load)


def random_small(seed: int, max_nu: int = 6) -> tuple[NetworkInstance, ForecastProfile]:
    """Random 2-3 bus instance with at most ``max_nu`` uncertain entries and T <= 4."""
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 4))
    n_comp = max(1, min(max_nu // T, 3))
    n = int(rng.integers(2, 4))
    lines = [Line(int(rng.integers(0, k)), k, float(rng.uniform(0.1, 0.6)), float(rng.uniform(0.05, 0.4)))
             for k in range(1, n)]
    dgs = []
    for k in range(int(rng.integers(1, 3))):
        pm = float(rng.uniform(60, 150))
        dgs.append(DG(int(rng.integers(1, n)), pm, float(rng.uniform(0.05, 0.2)) * pm, float(rng.uniform(0.4, 1.0)) * pm,
                      float(rng.uniform(0.4, 1.0)) * pm, 0.8 * pm, -0.5 * pm, float(rng.uniform(1.5, 4.0)),
                      float(rng.uniform(2, 20)), f"DG{k + 1}"))
    esss = []
    if rng.random() < 0.5:
        esss.append(ESS(int(rng.integers(1, n)), 30.0, 30.0, 100.0, 20.0, 0.9, "ESS1"))
    price = rng.uniform(1.5, 4.5, T)
    # pick uncertain components: one PV bus maybe, the rest load buses
    buses = list(range(1, n))
    pv_buses = (int(rng.choice(buses)),) if n_comp > 1 and rng.random() < 0.7 else ()
    n_load = max(1, min(n_comp - len(pv_buses), len(buses)))
    load_buses = sorted(rng.choice(buses, size=n_load, replace=False).tolist())
    net = NetworkInstance(
        n_buses=n, lines=lines, dgs=dgs, esss=esss, tariffs=_tariffs(price),
        curtail_penalty=float(rng.uniform(3, 8)), shed_penalty=float(rng.uniform(12, 25)),
        kappa_import=float(rng.uniform(0.1, 0.3)), kappa_export=float(rng.uniform(0.1, 0.3)),
        line_limit=400.0, horizon=T, dt=1.0, tan_delta=rng.uniform(0.2, 0.5, n), pv_buses=pv_buses,
    )
    load = np.zeros((n, T))
    pv = np.zeros((n, T))
    for b in load_buses:
        load[b] = rng.uniform(40, 120) * rng.uniform(0.7, 1.0, T)
    for b in pv_buses:
        pv[b] = rng.uniform(20, 80) * rng.uniform(0.3, 1.0, T)
    return net, ForecastProfile(pv, load)


def synthetic_history(net: NetworkInstance, forecast: ForecastProfile, samples: int = 200,
                      seed: int = 0) -> dict[tuple[str, int], np.ndarray]:
    """Seeded historical profiles around the forecast.

    PV is the forecast times a left-skewed clearness factor (clouds only reduce
    output); load is the forecast times a right-skewed lognormal factor.  Both
    have day-level and hour-level noise so the empirical bands are off-centred
    relative to the forecast, which is the situation the confidence-level sets
    are meant to capture.
    """
    from .network import uncertain_components

    rng = np.random.default_rng(seed)
    T = net.horizon
    out = {}
    for comp in uncertain_components(net, forecast):
        base = getattr(forecast, comp.series)[comp.bus]
        if comp.series == "pv":
            day = rng.beta(5.0, 1.6, size=(samples, 1)) * 1.15
            hour = 1.0 + 0.08 * rng.standard_normal((samples, T))
            vals = base[None, :] * np.clip(day * hour, 0.0, 1.3)
        else:
            day = rng.lognormal(0.0, 0.08, size=(samples, 1))
            hour = rng.lognormal(0.0, 0.05, size=(samples, T))
            vals = base[None, :] * day * hour
        out[(comp.series, comp.bus)] = np.round(vals, 4)
    return out
