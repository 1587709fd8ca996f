import logging
from dataclasses import dataclass

import numpy as np
import pytest

from cligdt.instances import random_small, six_bus, synthetic_history, two_bus
from cligdt.network import compile_network, nominal_vector
from cligdt.uncertainty import CdfBand, build_bound_curves, history_matrix


@dataclass
class Case:
    net: object
    forecast: object
    problem: object
    layout: object
    nominal: np.ndarray
    samples: np.ndarray
    curves: object


def make_case(net, fc, samples=200, seed=0):
    problem, layout = compile_network(net, fc)
    hist = synthetic_history(net, fc, samples, seed)
    S = history_matrix(hist, layout.components, net.horizon)
    u0 = nominal_vector(net, fc)
    logging.getLogger("cligdt.uncertainty").setLevel(logging.ERROR)
    curves = build_bound_curves(CdfBand.build(S), u0, net.horizon)
    return Case(net, fc, problem, layout, u0, S, curves)


@pytest.fixture(scope="session")
def small_case():
    return make_case(*random_small(3), seed=3)


@pytest.fixture(scope="session")
def two_bus_case():
    return make_case(*two_bus(2), seed=0)


@pytest.fixture(scope="session")
def six_bus_case():
    return make_case(*six_bus(6), samples=200, seed=1)


# one pass/fail line per acceptance criterion, printed at the end of the run
_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Call with (number, ok, detail); the line is printed in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_CRITERIA[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
