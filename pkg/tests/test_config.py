import math

import pytest
from hypothesis import given, strategies as st

from cligdt.config import ConfigError, RunConfig, load_config, parse_pairs


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.gamma == 0.8 and cfg.n == 8 and cfg.eps == 0.005
    assert cfg.budget is None and math.isinf(cfg.time_limit)


def test_file_then_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\ngamma = 0.6   # trailing\n\nn = 13\npruning = no\ngammas = 0.5, 1.0\nbudget = none\n")
    cfg = load_config(p, {"gamma": "0.9"})
    assert cfg.gamma == 0.9 and cfg.n == 13 and cfg.pruning is False
    assert cfg.gammas == (0.5, 1.0) and cfg.budget is None


@pytest.mark.parametrize("text", ["gamma 0.5", "colour = red", "n = eight", "pruning = maybe"])
def test_bad_lines(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text + "\n")
    with pytest.raises(ConfigError):
        load_config(p)


@pytest.mark.parametrize("key,value", [("eps", "0"), ("n", "1"), ("engine", "benders"), ("band_width", "0.5"),
                                       ("scenario_source", "oracle"), ("gammas", "-1")])
def test_validation(key, value):
    with pytest.raises(ConfigError):
        load_config(None, {key: value})


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.cfg")


@given(gamma=st.floats(0, 5), n=st.integers(2, 30), eps=st.floats(1e-6, 0.5), pruning=st.booleans())
def test_text_roundtrip(gamma, n, eps, pruning):
    cfg = RunConfig(gamma=gamma, n=n, eps=eps, pruning=pruning)
    back = RunConfig(**parse_pairs(enumerate(cfg.to_text().splitlines(), 1)))
    assert back == cfg
    assert back.digest() == cfg.digest()
