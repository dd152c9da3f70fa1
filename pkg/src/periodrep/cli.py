"""Command-line front end: ``simulate``, ``fit``, ``evaluate``, ``bench``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bench import bench_report, direct_objective
from .errors import DataError, NumericError
from .models import get_model, morris_lecar, predator_prey
from .observer import ObserverGains, compute_fundamental_matrix, pe_check, predict
from .optim import BFGSConfig, NelderMeadConfig, Objective, bfgs, nelder_mead
from .periods import return_period
from .signal import SampledSignal, UniformGrid, load_csv, save_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _params_pp(cfg) -> predator_prey.PredatorPreyParams:
    p = cfgmod.section(cfg, "params")
    return predator_prey.PredatorPreyParams(**{k: float(v) for k, v in p.items()})


def _params_ml(cfg) -> morris_lecar.MorrisLecarParams:
    p = cfgmod.section(cfg, "params")
    return morris_lecar.MorrisLecarParams(**{k: float(v) for k, v in p.items()})


def _true_lambda(cfg) -> np.ndarray:
    if cfg["model"] == "predator_prey":
        return _params_pp(cfg).reduced
    return _params_ml(cfg).nonlinear


def simulate_dataset(cfg) -> tuple[dict, dict]:
    """One period of the configured model; returns (columns, summary)."""
    dt = float(cfg["simulate.dt"])
    method = cfg["simulate.method"]
    if cfg["model"] == "predator_prey":
        params = _params_pp(cfg).validate()
        period = cfg["simulate.period"]
        x0, z0 = float(cfg["simulate.x0"]), float(cfg["simulate.z0"])
        if period is None:
            probe, _ = predator_prey.simulate_pp(params, x0, z0, dt, 3 * predator_prey.PERIOD, method)
            period = return_period(probe.values, dt)
        x, z = predator_prey.simulate_pp(params, x0, z0, dt, float(period), method)
        detected = None
        try:
            probe, _ = predator_prey.simulate_pp(params, x0, z0, dt, 1.5 * float(period), method)
            detected = return_period(probe.values, dt)
        except DataError:
            pass
        t = x.t
        cols = {"x": x.values, "z": z.values}
        summary = {"period": float(period), "detected_period": detected, "start_time": 0.0}
    else:
        params = _params_ml(cfg).validate()
        ds = morris_lecar.ml_dataset(params, dt, float(cfg["simulate.burn_in"]), method,
                                     float(cfg["simulate.x0"]), float(cfg["simulate.q0"]),
                                     float(cfg["simulate.extra"]))
        t = ds.y.t
        cols = {"x": ds.y.values, "q": ds.q.values}
        summary = {"period": ds.period, "detected_period": ds.period, "start_time": ds.start_time}
    summary.update(n_points=int(t.size), dt=dt, method=method)
    return {"t": t, **cols}, summary


def load_data(cfg, data_path) -> SampledSignal:
    period = cfg["data.period"]
    if data_path is not None:
        return load_csv(data_path, None if period is None else float(period))
    cols, summary = simulate_dataset(cfg)
    grid = UniformGrid(float(cols["t"][0]), float(cfg["simulate.dt"]), cols["t"].size)
    return SampledSignal(grid, cols["x"], summary["period"] if period is None else float(period))


def _gains(cfg) -> ObserverGains:
    try:
        return ObserverGains(np.asarray(cfg["observer.l"], float), np.asarray(cfg["observer.b"], float))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _fundamental(cfg, model, y):
    h = cfg["observer.h"]
    return compute_fundamental_matrix(model.system(), _gains(cfg), y, cfg["observer.method"],
                                      None if h is None else float(h))


def _optim_config(cfg):
    cls = NelderMeadConfig if cfg["fit.optimizer"] == "nelder_mead" else BFGSConfig
    fields = {f.name for f in dataclasses.fields(cls)}
    opts = cfgmod.section(cfg, "optim")
    bad = sorted(set(opts) - fields)
    if bad:
        raise UsageError(f"unknown {cls.__name__} options: {', '.join(bad)}")
    try:
        return cls(**opts)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _start(cfg, lam_true, rep: int) -> np.ndarray:
    rng = np.random.default_rng([int(cfg["seed"]), rep])
    base = cfg["fit.start"]
    perturb = float(cfg["fit.start_perturb"])
    if base is not None and rep == 0:
        return np.asarray(base, float)
    center = lam_true if base is None else np.asarray(base, float)
    return center * (1 + perturb * rng.choice([-1.0, 1.0], center.size))


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _lambda_dict(model, lam):
    names = model.system().param_names
    return dict(zip(names, np.asarray(lam, float).tolist()))


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg, args) -> int:
    cols, summary = simulate_dataset(cfg)
    out = Path(args.out)
    t = cols.pop("t")
    for name, values in cols.items():
        save_csv(out / f"{name}.csv", t, {name: values})
    cfg = {**cfg, "data.period": summary["period"]}
    _write_json(out / "simulate.json", summary)
    cfgmod.write_config(cfg, out / "config.resolved")
    print(f"wrote {len(t)} samples per signal to {out} (period {summary['period']:.6g})")
    return EXIT_OK


def cmd_fit(cfg, args) -> int:
    model = get_model(cfg["model"])
    out = Path(args.out)
    y = load_data(cfg, args.data)
    system = model.system()
    lam_min, ok = pe_check(system, y, float(cfg["fit.pe_delta"]))
    if not ok:
        msg = f"persistency of excitation check failed (smallest Gram eigenvalue {lam_min:.3g})"
        if not cfg["fit.allow_pe_failure"]:
            raise DataError(msg + "; rerun with --allow-pe-failure to proceed anyway")
        warnings.warn(msg, RuntimeWarning, stacklevel=1)
    Phi = _fundamental(cfg, model, y)
    obj = Objective(system, _gains(cfg), Phi, y, int(cfg["fit.stride"]), cfg["fit.rule"],
                    int(cfg["workers"]), model.parametrization, model.box)
    ocfg = _optim_config(cfg)
    run = nelder_mead if cfg["fit.optimizer"] == "nelder_mead" else bfgs
    lam_true = _true_lambda(cfg)
    names = list(system.param_names)
    lines = []
    for rep in range(int(cfg["fit.repeat"])):
        start = _start(cfg, lam_true, rep)
        s0 = model.parametrization.to_search(start)
        if not model.box.contains(s0):
            raise UsageError(f"start point {start.tolist()} is outside the admissible box")
        t0 = time.perf_counter()
        res = run(obj, s0, ocfg)
        elapsed = time.perf_counter() - t0
        theta = res.theta_hat.copy()
        if args.adjust_theta2 is not None and theta.size >= 2:
            theta[1] += args.adjust_theta2
        record = {"repeat": rep, "start": start.tolist(), **res.to_dict(),
                  "lambda_named": _lambda_dict(model, res.lambda_hat),
                  "theta_adjusted": theta.tolist(),
                  "linear_block": model.interpret_theta(theta) if theta.size else {},
                  "period": y.period_T, "wall_seconds": elapsed}
        lines.append(json.dumps(record))
        hist = np.asarray(res.objective_history)
        lam_hist = model.parametrization.from_search(res.lambda_history)
        cols = {"objective": hist, **{n: lam_hist[:, i] for i, n in enumerate(names)}}
        suffix = "" if rep == 0 else f"_r{rep}"
        save_csv(out / f"history{suffix}.csv", np.arange(hist.size, dtype=float), cols)
        print(f"repeat {rep}: {res.reason} after {res.iterations} iterations, "
              f"objective {res.value:.6g}, lambda {np.array2string(res.lambda_hat, precision=6)}")
    (out / "fit.jsonl").write_text("\n".join(lines) + "\n")
    cfgmod.write_config(cfg, out / "config.resolved")
    return EXIT_OK


def cmd_evaluate(cfg, args) -> int:
    model = get_model(cfg["model"])
    out = Path(args.out)
    y = load_data(cfg, args.data)
    system = model.system()
    lam = cfg["evaluate.lambda"]
    lam = _true_lambda(cfg) if lam is None else np.asarray(lam, float)
    if lam.size != system.k_lambda:
        raise UsageError(f"lambda needs {system.k_lambda} entries, got {lam.size}")
    Phi = _fundamental(cfg, model, y)
    pred = predict(system, _gains(cfg), Phi, y, lam, cfg["evaluate.rule"], int(cfg["workers"]))
    err = pred.yhat - y.values
    save_csv(out / "yhat.csv", y.t, {"y": y.values, "yhat": pred.yhat, "error": err})
    save_csv(out / "error.csv", y.t, {"error": err})
    x0, theta = pred.R[:system.n], pred.R[system.n:]
    summary = {"lambda": lam.tolist(), "R": pred.R.tolist(), "x0": x0.tolist(),
               "theta": theta.tolist(),
               "linear_block": model.interpret_theta(theta) if theta.size else {},
               "max_abs_error": float(np.max(np.abs(err))),
               "rms_ratio": float(np.sqrt(np.mean(err**2) / np.mean(y.values**2))),
               "periodic_residual": pred.periodic_residual(Phi),
               "spectral_radius": Phi.spectral_radius()}
    _write_json(out / "evaluate.json", summary)
    cfgmod.write_config(cfg, out / "config.resolved")
    print(f"max |yhat - y| = {summary['max_abs_error']:.3g}")
    return EXIT_OK


def cmd_bench(cfg, args) -> int:
    model = get_model(cfg["model"])
    out = Path(args.out)
    y = load_data(cfg, args.data)
    system = model.system()
    Phi = _fundamental(cfg, model, y)
    obj = Objective(system, _gains(cfg), Phi, y, int(cfg["fit.stride"]), cfg["fit.rule"], 1,
                    model.parametrization, model.box)
    direct = direct_objective(obj, model.direct_output) if cfg["bench.euler"] else None
    report = bench_report(obj, int(cfg["bench.n"]), int(cfg["seed"]), int(cfg["bench.workers"]), direct)
    report.write_csv(out / "bench.csv")
    cfgmod.write_config(cfg, out / "config.resolved")
    for r in report.rows:
        print(f"{r['backend']:>12}  {r['wall_seconds']:9.3f} s  x{r['speedup_vs_seq']:.2f}  "
              f"discrepancy {r['max_discrepancy']:.3g}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "evaluate": cmd_evaluate, "bench": cmd_bench}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="periodrep", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--model", help="model name (overrides the config)")
    p.add_argument("--data", help="t,y CSV with one period of the measured output")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--workers", type=int, help="quadrature workers (bench: thread count)")
    p.add_argument("--seed", type=int, help="seed for start perturbations and candidate draws")
    p.add_argument("--adjust-theta2", type=float, help="shift added to the second linear estimate")
    p.add_argument("--allow-pe-failure", action="store_true",
                   help="fit even if the persistency of excitation check fails")
    p.add_argument("--lambda", dest="lam", help="comma-separated nonlinear parameters (evaluate)")
    p.add_argument("--n", type=int, help="number of candidates (bench)")
    p.add_argument("--repeat", type=int, help="number of fits from perturbed starts")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key")
    return p


def _overrides(args) -> dict:
    o = {}
    if args.model is not None:
        o["model"] = args.model
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        o["seed"] = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("workers must be >= 1")
        o["workers" if args.command != "bench" else "bench.workers"] = args.workers
    if args.allow_pe_failure:
        o["fit.allow_pe_failure"] = True
    if args.lam is not None:
        try:
            o["evaluate.lambda"] = [float(v) for v in args.lam.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --lambda: {exc}") from exc
    if args.n is not None:
        o["bench.n"] = args.n
    if args.repeat is not None:
        o["fit.repeat"] = args.repeat
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        o[key.strip()] = cfgmod._parse_value(value.strip())
    return o


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        try:
            user = cfgmod.load_config(args.config) if args.config else {}
        except (OSError, DataError) as exc:
            raise UsageError(f"cannot use config {args.config}: {exc}") from exc
        cfg = cfgmod.resolve(user, _overrides(args))
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
