"""Flat ``key = value`` run configuration with dotted section names.

    # comment
    model = "morris_lecar"
    observer.l = [-1.0]
    optim.max_iters = 500

Values are JSON literals (numbers, lists, strings in double quotes,
``true``/``false``/``null``); anything that is not valid JSON is kept as a
bare string. Every run writes the fully resolved configuration next to its
outputs so an experiment can be repeated from that file alone.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ParseError
from .models import MODELS, get_model, morris_lecar, predator_prey

_COMMON = {
    "seed": 0,
    "workers": 1,
    "simulate.method": "rk4",
    "observer.l": [-1.0],
    "observer.b": [1.0],
    "observer.method": "dopri_fixed",
    "observer.h": None,
    "data.period": None,
    "fit.rule": "trapezoid",
    "fit.start": None,
    "fit.start_perturb": 0.05,
    "fit.repeat": 1,
    "fit.pe_delta": 1e-8,
    "fit.allow_pe_failure": False,
    "evaluate.lambda": None,
    "evaluate.rule": "trapezoid",
    "bench.n": 1000,
    "bench.workers": 8,
    "bench.euler": True,
}

_PER_MODEL = {
    "predator_prey": {
        "params": dict(zip(("p1", "p2", "p3", "p4", "p5", "p6"), predator_prey.TRUE_PARAMS.as_array().tolist())),
        "simulate.dt": 0.001,
        "simulate.x0": predator_prey.INITIAL_CONDITION[0],
        "simulate.z0": predator_prey.INITIAL_CONDITION[1],
        "simulate.period": predator_prey.PERIOD,
        "fit.optimizer": "nelder_mead",
        "fit.stride": 1,
        "fit.start": predator_prey.START_LAMBDA.tolist(),
    },
    "morris_lecar": {
        "params": dict(zip(morris_lecar.PARAM_NAMES + ("gL", "I"),
                           morris_lecar.TRUE_PARAMS.as_array().tolist())),
        "simulate.dt": 0.0002,
        "simulate.x0": -20.0,
        "simulate.q0": 0.1,
        "simulate.burn_in": 100.0,
        "simulate.extra": 60.0,
        "fit.optimizer": "bfgs",
        "fit.stride": 200,
    },
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", lineno)
        out[key] = _parse_value(value.strip())
    return out


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


def defaults(model: str) -> dict:
    get_model(model)
    out = {"model": model, **_COMMON}
    per = dict(_PER_MODEL[model])
    for name, value in per.pop("params").items():
        out[f"params.{name}"] = value
    out.update(per)
    return out


def resolve(user: dict, overrides: dict | None = None) -> dict:
    """Model defaults overlaid with the user's keys and then ``overrides``."""
    merged = {**user, **(overrides or {})}
    model = merged.get("model", "predator_prey")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    cfg = defaults(model)
    unknown = [k for k in merged if k not in cfg and not k.startswith("optim.")]
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    cfg.update(merged)
    return cfg


def section(cfg: dict, name: str) -> dict:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in cfg.items() if k.startswith(prefix)}


def dump_config(cfg: dict) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in cfg.items())


def write_config(cfg: dict, path) -> None:
    Path(path).write_text(dump_config(cfg))
