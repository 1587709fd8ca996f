"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Grammar, one entry per line::

    # comment
    key = value        # trailing comments are allowed

Keys are the field names of :class:`RunConfig`.  Lists are comma separated.
Booleans accept true/false/yes/no/1/0.  Unknown keys are an error.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


ENGINES = ("pccg", "ccg")


@dataclass
class RunConfig:
    network: str = ""
    forecast: str = ""
    history: str = ""
    output_dir: str = "out"
    cache_dir: str = ""
    # budget: either an absolute value or a multiple of the deterministic optimum
    budget: float | None = None
    budget_multiplier: float = 1.25
    gamma: float = 0.8
    n: int = 8
    eps: float = 0.005
    engine: str = "pccg"
    shadow: str = ""
    pruning: bool = True
    band_width: float | None = None
    h_alpha: float = 0.001
    bigm_fallback: float = 1e5
    master_gap: float = 1e-3
    sub_gap: float = 1e-4
    max_iter: int = 50
    time_limit: float = math.inf
    sub_time_limit: float = math.inf
    seed: int = 0
    scenarios: int = 100
    scenario_source: str = "set"   # "set": sample U(alpha*); "history": last samples of the history file
    tssp_samples: int = 20
    gammas: tuple = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    oracle_step: float = 0.01
    workers: int = 1
    lp_dump: str = ""

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.eps > 0, "eps must be > 0")
        need(self.gamma >= 0, "gamma must be >= 0")
        need(self.n >= 2, "n must be >= 2")
        need(self.engine in ENGINES, f"engine must be one of {', '.join(ENGINES)}")
        need(self.shadow in ("",) + ENGINES, f"shadow must be empty or one of {', '.join(ENGINES)}")
        need(self.budget is None or math.isfinite(self.budget), "budget must be finite")
        need(self.budget_multiplier > 0, "budget_multiplier must be > 0")
        need(self.band_width is None or 0 <= self.band_width < 0.5, "band_width must lie in [0, 0.5)")
        need(0 < self.h_alpha <= 0.1, "h_alpha must lie in (0, 0.1]")
        need(self.bigm_fallback > 0, "bigm_fallback must be > 0")
        need(self.master_gap >= 0 and self.sub_gap >= 0, "gaps must be >= 0")
        need(self.max_iter >= 1, "max_iter must be >= 1")
        need(self.time_limit > 0 and self.sub_time_limit > 0, "time limits must be > 0")
        need(self.seed >= 0, "seed must be >= 0")
        need(self.scenarios >= 1, "scenarios must be >= 1")
        need(self.scenario_source in ("set", "history"), "scenario_source must be 'set' or 'history'")
        need(self.tssp_samples >= 1, "tssp_samples must be >= 1")
        need(len(self.gammas) > 0 and all(g >= 0 for g in self.gammas), "gammas must be a nonempty list of values >= 0")
        need(0 < self.oracle_step <= 1, "oracle_step must lie in (0, 1]")
        need(self.workers >= 1, "workers must be >= 1")
        return self

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ", ".join(repr(x) if not isinstance(x, float) else f"{x:g}" for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _convert(key: str, raw: str):
    f = _FIELDS[key]
    default = f.default
    raw = raw.strip()
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if "None" in kind and raw.lower() in ("", "none"):
            return None
        if isinstance(default, int) or kind.startswith("int"):
            return int(raw)
        if isinstance(default, float) or "float" in kind:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_pairs(pairs, source: str = "<override>") -> dict:
    out = {}
    for lineno, line in pairs:
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line.strip()!r}")
        key, raw = (s.strip() for s in text.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, raw)
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file, then ``overrides`` (already typed or raw strings)."""
    values = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_pairs(enumerate(p.read_text().splitlines(), 1), str(p)))
    for k, v in (overrides or {}).items():
        k = k.replace("-", "_")
        if k not in _FIELDS:
            raise ConfigError(f"unknown key {k!r}")
        values[k] = _convert(k, v) if isinstance(v, str) else v
    return RunConfig(**values).validate()
