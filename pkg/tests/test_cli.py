import csv
import json

import pytest

from cligdt.cli import main
from cligdt.instances import synthetic_history, two_bus
from cligdt.network import save_forecast, save_history, save_network


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    net, fc = two_bus(2)
    save_network(net, d / "network.json")
    save_forecast(fc, d / "forecast.csv")
    save_history(synthetic_history(net, fc, 120, 0), d / "history.csv")
    (d / "run.cfg").write_text(
        f"network = {d / 'network.json'}\nforecast = {d / 'forecast.csv'}\nhistory = {d / 'history.csv'}\n"
        f"output_dir = {d / 'out'}\nbudget_multiplier = 1.1\ngamma = 1.0\nn = 6\nscenarios = 20\n"
        "tssp_samples = 5\ngammas = 0.5, 1.0\noracle_step = 0.05\n")
    return d


def run(workdir, *args):
    return main([args[0], "--config", str(workdir / "run.cfg"), *args[1:]])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_pipeline(workdir):
    out = workdir / "out"
    assert run(workdir, "build-uncertainty") == 0
    assert (out / "coverage.csv").exists() and (out / "bands.json").exists()
    assert run(workdir, "solve") == 0
    res = json.loads((out / "result.json").read_text())
    assert 0 <= res["alpha"] <= 1 and res["value"] <= res["budget"] * (1 + 1e-9)
    assert res["stamp"]["seed"] == 0 and "gamma = 1.0" in res["stamp"]["config"]
    trace = rows(out / "trace.csv")
    assert {r["status"] for r in trace} <= {"solved", "reused", "pruned"}
    assert rows(out / "rounds.csv")
    assert run(workdir, "baseline", "igdt") == 0
    assert run(workdir, "baseline", "tssp") == 0
    assert run(workdir, "evaluate") == 0
    t3 = rows(out / "table3.csv")
    assert [r["method"] for r in t3] == ["CL-IGDT", "IGDT", "TSSP"]
    assert run(workdir, "oracle") == 0
    orc = json.loads((out / "oracle.json").read_text())
    assert orc["alpha_gap"] <= 1 / 8 + 0.05 + 1e-9
    assert run(workdir, "gamma-sweep") == 0
    t4 = rows(out / "table4.csv")
    assert [float(r["gamma"]) for r in t4] == [0.5, 1.0]


def test_same_seed_same_reports(workdir):
    out = workdir / "out"
    assert run(workdir, "solve") == 0
    first = json.loads((out / "result.json").read_text())
    assert run(workdir, "solve") == 0
    second = json.loads((out / "result.json").read_text())
    assert first == second


def test_infeasible_budget_exit_code(workdir):
    assert run(workdir, "solve", "--budget", "1.0", "--output-dir", str(workdir / "low")) == 3


def test_input_errors(workdir, capsys):
    assert main(["solve", "--config", str(workdir / "missing.cfg")]) == 2
    assert run(workdir, "solve", "--set", "gamma=-1") == 2
    assert run(workdir, "solve", "--network", str(workdir / "nope.json")) == 2
    bad = workdir / "bad_history.csv"
    bad.write_text("sample,bus,series,t1,t2\n0,1,pv,1.0,oops\n")
    assert run(workdir, "solve", "--history", str(bad), "--output-dir", str(workdir / "bad")) == 2
    assert "error" in capsys.readouterr().err


def test_solver_limit_exit_code(workdir):
    assert run(workdir, "solve", "--time-limit", "1e-9", "--output-dir", str(workdir / "lim")) == 4
