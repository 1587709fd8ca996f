"""Command-line front end.

    python -m cligdt <command> [--config FILE] [--set key=value ...] [--<key> value ...]

Every RunConfig field is also a flag (``--budget-multiplier 1.2``).  Exit
codes: 0 success, 2 input error, 3 infeasible budget, 4 solver limit.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .compact import RecourseInfeasible
from .config import ConfigError, RunConfig, load_config
from .decomposition import BigMError, BigMPolicy, CCGOptions, SolverLimitError
from .evaluation import (evaluate, gamma_sweep, igdt_baseline, sample_scenarios, tssp_baseline, write_plot_data,
                         write_table3, write_table4)
from .network import DataError, compile_network, deterministic_baseline, load_forecast, load_history, \
    load_network, nominal_vector
from .oracle import OracleDimensionError, extensive_solve, grid_search_alpha
from .search import solve_cl_igdt, write_trace
from .uncertainty import UncertaintyError, coverage_table, history_matrix, instantiate, load_or_build_curves

log = logging.getLogger("cligdt")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE_BUDGET, EXIT_SOLVER_LIMIT = 0, 2, 3, 4


class InputError(Exception):
    pass


# -- shared loading ----------------------------------------------------------------------

class Context:
    """Inputs shared by the commands, loaded lazily from the configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        for key in ("network", "forecast"):
            if not getattr(cfg, key):
                raise InputError(f"missing required setting: {key}")
        self.net = load_network(cfg.network)
        self.forecast = load_forecast(cfg.forecast, self.net.n_buses)
        if self.forecast.pv.shape[1] != self.net.horizon:
            raise InputError(f"forecast has {self.forecast.pv.shape[1]} periods, network horizon is "
                             f"{self.net.horizon}")
        self.problem, self.layout = compile_network(self.net, self.forecast)
        self.nominal = nominal_vector(self.net, self.forecast)
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self._curves = None
        self._samples = None
        self._det = None

    @property
    def names(self):
        return tuple((c.series, c.bus) for c in self.layout.components)

    @property
    def samples(self) -> np.ndarray:
        if self._samples is None:
            if not self.cfg.history:
                raise InputError("missing required setting: history")
            hist = load_history(self.cfg.history)
            self._samples = history_matrix(hist, self.layout.components, self.net.horizon)
        return self._samples

    @property
    def curves(self):
        if self._curves is None:
            cache = self.cfg.cache_dir or str(self.out / "cache")
            names = tuple((c.series, c.bus, t) for c in self.layout.components for t in range(self.net.horizon))
            self._curves = load_or_build_curves(self.samples, self.nominal, self.net.horizon, self.cfg.band_width,
                                                self.cfg.h_alpha, names, cache)
        return self._curves

    @property
    def deterministic(self) -> tuple[float, np.ndarray]:
        if self._det is None:
            self._det = deterministic_baseline(self.problem, self.nominal, gap=self.cfg.master_gap)
        return self._det

    def budget(self) -> float:
        if self.cfg.budget is not None:
            return float(self.cfg.budget)
        return self.cfg.budget_multiplier * self.deterministic[0]

    def options(self) -> CCGOptions:
        c = self.cfg
        return CCGOptions(eps=c.eps, max_iter=c.max_iter, master_gap=c.master_gap, sub_gap=c.sub_gap,
                          time_limit=c.time_limit, sub_time_limit=c.sub_time_limit,
                          bigm=BigMPolicy(fallback=c.bigm_fallback))

    def stamp(self, command: str) -> dict:
        h = hashlib.sha256(self.cfg.to_text().encode())
        for key in ("network", "forecast", "history"):
            path = getattr(self.cfg, key)
            if path and Path(path).exists():
                h.update(Path(path).read_bytes())
        return {"command": command, "input_hash": h.hexdigest()[:16], "seed": self.cfg.seed,
                "version": __version__, "config": self.cfg.to_text()}

    def read_json(self, name: str) -> dict:
        path = self.out / name
        if not path.exists():
            raise InputError(f"{path} not found; run the command that produces it first")
        return json.loads(path.read_text())

    def write_json(self, name: str, data: dict) -> Path:
        path = self.out / name
        path.write_text(json.dumps(data, indent=1, sort_keys=True))
        return path


def _scenarios(ctx: Context, alpha: float) -> tuple[np.ndarray, str]:
    cfg = ctx.cfg
    if cfg.scenario_source == "history":
        s = ctx.samples.T
        return s[-cfg.scenarios:], "history"
    uset = instantiate(ctx.curves, alpha, cfg.gamma)
    return sample_scenarios(uset, cfg.scenarios, cfg.seed), "set"


# -- commands ------------------------------------------------------------------------------

def cmd_build_uncertainty(ctx: Context) -> int:
    curves = ctx.curves
    table = coverage_table(curves, ctx.samples)
    names = curves.names
    path = ctx.out / "coverage.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "bus", "t"] + [f"alpha={r['alpha']:g}" for r in table])
        for k in range(curves.n_u):
            series, bus, t = names[k]
            w.writerow([series, bus, t] + [f"{r['per_component'][k]:.4f}" for r in table])
    write_plot_data(curves, ctx.out / "bands.json")
    cache = ctx.cfg.cache_dir or str(ctx.out / "cache")
    summary = {"key": curves.key, "cache": str(Path(cache) / f"curves-{curves.key[:16]}.json"),
               "n_u": curves.n_u, "samples": int(ctx.samples.shape[1]),
               "coverage": [{k: v for k, v in r.items() if k != "per_component"} for r in table],
               "stamp": ctx.stamp("build-uncertainty")}
    ctx.write_json("uncertainty.json", summary)
    print(f"curves {curves.key[:16]} for {curves.n_u} coordinates from {ctx.samples.shape[1]} samples")
    return EXIT_OK


def cmd_solve(ctx: Context) -> int:
    cfg = ctx.cfg
    budget = ctx.budget()
    rounds = ctx.out / "rounds.csv"
    rounds.unlink(missing_ok=True)
    if cfg.lp_dump:
        from .compact import scenario_program
        model, *_ = scenario_program(ctx.problem, [ctx.nominal], mode="max")
        model.write_lp(cfg.lp_dump)
    rep = solve_cl_igdt(ctx.problem, ctx.curves, cfg.gamma, budget, cfg.n, cfg.engine, ctx.options(),
                        shadow=cfg.shadow or None, use_pruning=cfg.pruning, round_log=rounds)
    write_trace(rep, ctx.out / "trace.csv")
    ctx.problem.save(ctx.out / "problem.json")
    probes = list(rep.runs[cfg.engine].results.values())
    result = {
        "alpha": rep.alpha, "value": rep.value, "budget": budget, "gamma": cfg.gamma, "n": cfg.n,
        "eps": cfg.eps, "engine": cfg.engine, "final_interval": rep.final_interval,
        "infeasible_budget": rep.infeasible_budget, "inner_iterations": rep.inner_iterations,
        "evaluations": rep.search.evaluations, "pruned": rep.search.pruned,
        "certified": all(r.converged for r in probes),
        "max_probe_gap": max((r.gap for r in probes), default=0.0),
        "x": None if rep.x is None else rep.x.tolist(),
        "first_stage_cost": None if rep.x is None else float(ctx.problem.c1 @ rep.x),
        "stamp": ctx.stamp("solve"),
    }
    ctx.write_json("result.json", result)
    print(f"alpha* = {rep.alpha:.4f}  Lambda* = {rep.value:.2f}  budget = {budget:.2f}  "
          f"iterations = {rep.inner_iterations}")
    if not result["certified"]:
        print(f"warning: not every probe closed its gap (largest {result['max_probe_gap']:.2e})", file=sys.stderr)
    if rep.infeasible_budget:
        print("budget is below the robust cost at alpha = 0", file=sys.stderr)
        return EXIT_INFEASIBLE_BUDGET
    return EXIT_OK


def cmd_baseline(ctx: Context, method: str) -> int:
    cfg = ctx.cfg
    if method == "igdt":
        res = igdt_baseline(ctx.problem, ctx.nominal, ctx.net.horizon, ctx.budget(), cfg.n, ctx.options(),
                            cfg.engine, cfg.h_alpha)
        write_trace(res.report, ctx.out / "igdt_trace.csv")
        ctx.write_json("igdt.json", {"delta": res.delta, "value": res.report.value, "budget": res.report.budget,
                                     "infeasible_budget": res.report.infeasible_budget,
                                     "x": None if res.x is None else res.x.tolist(),
                                     "stamp": ctx.stamp("baseline igdt")})
        print(f"delta* = {res.delta:.4f}  Lambda* = {res.report.value:.2f}")
        return EXIT_INFEASIBLE_BUDGET if res.report.infeasible_budget else EXIT_OK
    sol = ctx.read_json("result.json")
    uset = instantiate(ctx.curves, sol["alpha"], cfg.gamma)
    res = tssp_baseline(ctx.problem, uset, cfg.tssp_samples, cfg.seed, gap=cfg.master_gap,
                        time_limit=cfg.time_limit)
    ctx.write_json("tssp.json", {"alpha": sol["alpha"], "samples": cfg.tssp_samples, "objective": res.objective,
                                 "x": res.x.tolist(), "stamp": ctx.stamp("baseline tssp")})
    print(f"sample-average objective = {res.objective:.2f} over {cfg.tssp_samples} samples")
    return EXIT_OK


def cmd_evaluate(ctx: Context) -> int:
    cfg = ctx.cfg
    sol = ctx.read_json("result.json")
    if sol["x"] is None:
        raise InputError("result.json holds no first-stage decision")
    scen, source = _scenarios(ctx, sol["alpha"])
    rows = []
    reports = {}
    runs = [("CL-IGDT", "alpha", sol["alpha"], sol["x"])]
    for name, label, pname, key in (("igdt.json", "IGDT", "delta", "delta"), ("tssp.json", "TSSP", "N", "samples")):
        if (ctx.out / name).exists():
            d = ctx.read_json(name)
            if d.get("x") is not None:
                runs.append((label, pname, d[key], d["x"]))
    for label, pname, pval, x in runs:
        rep = evaluate(ctx.problem, np.asarray(x), scen, cfg.seed, label, workers=cfg.workers)
        rows.append((label, pname, pval, rep))
        reports[label] = {**rep.summary(), "C_II": rep.second_stage.tolist()}
    write_table3(rows, ctx.out / "table3.csv")
    ctx.write_json("evaluation.json", {"source": source, "scenarios": int(len(scen)), "reports": reports,
                                       "stamp": ctx.stamp("evaluate")})
    for label, _, _, rep in rows:
        print(f"{label:8s} C_I={rep.first_stage:.2f} E[C_II]={rep.mean:.2f} NoP={rep.nop}")
    return EXIT_OK


def cmd_oracle(ctx: Context) -> int:
    cfg = ctx.cfg
    budget = ctx.budget()
    if ctx.problem.n_u > 12:
        raise OracleDimensionError(f"oracle is limited to n_u <= 12; this problem has n_u = {ctx.problem.n_u}")
    alpha, values = grid_search_alpha(ctx.problem, ctx.curves, cfg.gamma, budget, cfg.oracle_step)
    out = {"alpha": alpha, "budget": budget, "step": cfg.oracle_step,
           "values": {f"{a:.4f}": v for a, v in values.items()}, "stamp": ctx.stamp("oracle")}
    if (ctx.out / "result.json").exists():
        sol = ctx.read_json("result.json")
        ref = extensive_solve(ctx.problem, instantiate(ctx.curves, sol["alpha"], cfg.gamma)).value
        out.update({"solve_alpha": sol["alpha"], "alpha_gap": abs(sol["alpha"] - alpha),
                    "solve_value": sol["value"], "oracle_value_at_solve_alpha": ref,
                    "value_gap": abs(sol["value"] - ref) / max(abs(ref), 1e-9)})
    ctx.write_json("oracle.json", out)
    print(f"grid alpha = {alpha:.4f}")
    return EXIT_OK


def cmd_gamma_sweep(ctx: Context) -> int:
    cfg = ctx.cfg
    budget = ctx.budget()
    # one common scenario set, drawn from the widest set of the sweep
    scen, _ = _scenarios(ctx, 1.0) if cfg.scenario_source == "set" else _scenarios(ctx, 0.0)
    rows = gamma_sweep(ctx.problem, ctx.curves, budget, cfg.gammas, scen, cfg.n, ctx.options(), cfg.engine,
                       cfg.seed)
    write_table4(rows, ctx.out / "table4.csv")
    ctx.write_json("gamma_sweep.json", {"rows": [r.as_dict() for r in rows], "budget": budget,
                                        "stamp": ctx.stamp("gamma-sweep")})
    for r in rows:
        print(f"gamma={r.gamma:g} alpha={r.alpha:.4f} C_TOL={r.evaluation.total:.2f}")
    return EXIT_OK


COMMANDS = ("build-uncertainty", "solve", "evaluate", "baseline", "oracle", "gamma-sweep")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cligdt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "baseline":
            p.add_argument("method", choices=("igdt", "tssp"))
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
        p.add_argument("-v", "--verbose", action="count", default=0)
        for f in dataclasses.fields(RunConfig):
            p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None, metavar="V")
    return ap


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, "cfg_" + f.name)
        if v is not None:
            overrides[f.name] = v
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        ctx = Context(cfg)
        if args.command == "build-uncertainty":
            return cmd_build_uncertainty(ctx)
        if args.command == "solve":
            return cmd_solve(ctx)
        if args.command == "evaluate":
            return cmd_evaluate(ctx)
        if args.command == "baseline":
            return cmd_baseline(ctx, args.method)
        if args.command == "oracle":
            return cmd_oracle(ctx)
        return cmd_gamma_sweep(ctx)
    except (ConfigError, InputError, DataError, UncertaintyError, FileNotFoundError, RecourseInfeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverLimitError, BigMError) as exc:
        print(f"solver limit: {exc}", file=sys.stderr)
        return EXIT_SOLVER_LIMIT


if __name__ == "__main__":
    sys.exit(main())
