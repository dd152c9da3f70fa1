"""Worked models and a small registry used by the CLI and the benchmark."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..canonical import AdmissibleBox, CanonicalSystem
from ..optim import Identity
from ..signal import SampledSignal
from . import morris_lecar, predator_prey


@dataclass(frozen=True)
class ModelEntry:
    name: str
    system: Callable[[], CanonicalSystem]
    true_lambda: np.ndarray
    start_lambda: np.ndarray | None
    parametrization: object
    box: AdmissibleBox              # in search coordinates
    dataset: Callable[..., SampledSignal]
    default_dt: float
    optimizer: str
    interpret_theta: Callable[[np.ndarray], dict]
    direct_output: Callable[..., np.ndarray]


def _pp_dataset(dt=0.001, method="rk4", **_):
    return predator_prey.pp_dataset(dt=dt, method=method)[0]


def _ml_dataset(dt=0.0002, method="rk4", burn_in=100.0, **_):
    return morris_lecar.ml_dataset(dt=dt, method=method, burn_in=burn_in).y


def _ml_theta(theta):
    gL, I = morris_lecar.linear_block(theta)
    return {"gL": gL, "I": I}


_ratio = morris_lecar.RatioParametrization()

MODELS = {
    "predator_prey": ModelEntry(
        "predator_prey", predator_prey.predator_prey_system, predator_prey.TRUE_LAMBDA,
        predator_prey.START_LAMBDA, Identity(), predator_prey.BOX, _pp_dataset, 0.001,
        "nelder_mead", lambda theta: {}, predator_prey.direct_output),
    "morris_lecar": ModelEntry(
        "morris_lecar", morris_lecar.morris_lecar_system, morris_lecar.TRUE_LAMBDA,
        None, _ratio, _ratio.search_box(morris_lecar.BOX), _ml_dataset, 0.0002,
        "bfgs", _ml_theta, morris_lecar.direct_output),
}


def get_model(name: str) -> ModelEntry:
    try:
        return MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
