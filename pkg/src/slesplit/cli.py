"""Command line front end.

Subcommands
-----------
simulate     run one trace (standard, noise-reinforced or fractional driving)
moments      quadrature and Monte Carlo verification of the square moments
converge     coupled self-convergence study across dyadic meshes
dimension    box / yardstick dimension of input traces or fresh simulations
sweep        grid of fractional-trace dimensions over (kappa, Hurst)
interpolate  power-law interpolation of a driving CSV onto a finer mesh

Every command takes --seed, --workers, --out and --config.  A JSON config
file supplies any parameter by its flag name; explicit flags win over the
file, and the resolved parameter set is echoed into the metadata sidecar,
so a run is reproducible from its own output.  Nothing written depends on
wall-clock time or worker count.

Exit codes: 0 success, 1 I/O or config-file error, 2 validation error,
3 numeric-invariant breach (moment tolerance, broken monotone convergence,
a singular or swallowed flow).
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .analysis import (
    box_dimension,
    dimension_sweep,
    ensemble_moment_check,
    map_indexed,
    quadrature_moment_check,
    self_convergence,
    yardstick_dimension,
)
from .driving import DrivingSpec, FbmSynthesisError, power_interpolate, \
    sample_driving
from .splitting import FidelitySchedule, SingularityError, draw_curve, simulate
from .traceio import (
    driving_csv,
    read_driving_csv,
    read_trace_csv,
    trace_csv,
    trace_metadata,
    trace_svg,
)

__all__ = ["main"]

_REQUIRED = object()

_QUAD_TOL2 = 1e-10
_QUAD_TOL4 = 1e-9
_ENSEMBLE_SIGMA = 3.0

_KIND_TO_DRIVING = {"sle": "bm", "nrsle": "nrbm", "fsle": "fbm"}


class CliError(Exception):
    code = 1


class ConfigError(CliError):
    code = 1


class ValidationError(CliError):
    code = 2


class BreachError(CliError):
    code = 3


# ---------------------------------------------------------------------------
# Config plumbing


def _load_config(path: str) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return cfg


def _resolve(args, defaults: dict) -> tuple[dict, dict | None]:
    """Merge CLI values over config-file values over defaults.

    Returns the resolved parameter dict and the raw config dict (for the
    metadata echo).  Unknown config keys are rejected rather than ignored.
    """
    config = _load_config(args.config) if args.config else None
    cfg = config or {}
    unknown = sorted(set(cfg) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    params = {}
    for key, default in defaults.items():
        cli = getattr(args, key, None)
        if cli is not None:
            params[key] = cli
        elif key in cfg:
            params[key] = cfg[key]
        elif default is _REQUIRED:
            raise ValidationError(f"missing required parameter: {key}")
        else:
            params[key] = default
    return params, config


def _sidecar(out: str) -> str:
    return out[:-4] + ".json" if out.endswith(".csv") else out + ".json"


def _write_text(path: str, text: str) -> None:
    with open(path, "w") as f:
        f.write(text)


def _emit_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        _write_text(out, text)
        print(f"wrote {out}")


def _meta(command: str, params: dict, config: dict | None, extra: dict | None = None) -> dict:
    doc = {"command": command, "params": params, "config_file": config}
    if extra:
        doc.update(extra)
    return doc


def _positive_int(params: dict, key: str) -> int:
    v = params[key]
    if v != int(v) or int(v) < 1:
        raise ValidationError(f"{key} must be a positive integer; got {v!r}")
    return int(v)


def _make_spec(kind: str, kappa: float, reinforce, hurst, seed: int) -> DrivingSpec:
    if kind not in _KIND_TO_DRIVING:
        raise ValidationError(f"kind must be one of sle, nrsle, fsle; got {kind!r}")
    if reinforce is not None and kind != "nrsle":
        raise ValidationError("--reinforce applies to --kind nrsle only")
    if hurst is not None and kind != "fsle":
        raise ValidationError("--hurst applies to --kind fsle only")
    return DrivingSpec(
        kind=_KIND_TO_DRIVING[kind],
        kappa=float(kappa),
        p=float(reinforce) if reinforce is not None else 0.0,
        hurst=float(hurst) if hurst is not None else 0.5,
        seed=int(seed),
    )


def _schedule(params: dict) -> FidelitySchedule:
    horizon = float(params["T"])
    if params["theory"] is not None:
        if params["steps"] is not None or params["y0"] is not None:
            raise ValidationError("--theory replaces --steps and --y0; give one or the other")
        return FidelitySchedule.theory(_positive_int(params, "theory"), horizon)
    if params["steps"] is None or params["y0"] is None:
        raise ValidationError("need --steps and --y0 (or --theory N)")
    return FidelitySchedule.practical(_positive_int(params, "steps"),
                                      float(params["y0"]), horizon)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    params, config = _resolve(args, {
        "kind": _REQUIRED, "kappa": _REQUIRED, "reinforce": None, "hurst": None,
        "steps": None, "y0": None, "theory": None, "T": 1.0, "shift": False,
        "stream": 0, "svg": None, "seed": 0, "workers": 1, "out": _REQUIRED,
    })
    spec = _make_spec(params["kind"], params["kappa"], params["reinforce"],
                      params["hurst"], params["seed"])
    schedule = _schedule(params)
    trace = simulate(spec, schedule, stream=int(params["stream"]),
                     shift=bool(params["shift"]))
    out = params["out"]
    _write_text(out, trace_csv(trace))
    print(f"wrote {out}")
    meta = _meta("simulate", params, config, trace_metadata(trace))
    if spec.kind == "fbm":
        meta["integrator"] = {"halfstep": "rk4-on-squared-state",
                              "substep_displacement": 1e-2}
    _emit_json(meta, _sidecar(out))
    if params["svg"]:
        _write_text(params["svg"], trace_svg(trace))
        print(f"wrote {params['svg']}")
    return 0


# ---------------------------------------------------------------------------
# moments


def _moment_doc(rep) -> dict:
    dev2 = np.abs(rep.measured2 - rep.target2)
    dev4 = np.abs(rep.measured4 - rep.target4)
    doc = {
        "mode": rep.mode, "kappa": rep.kappa, "y0": rep.y0,
        "horizon": rep.horizon, "steps": rep.steps,
        "max_dev2": rep.max_dev2, "max_dev4": rep.max_dev4,
        "times": [float(t) for t in rep.times],
        "target2": [float(v) for v in rep.target2],
        "target4": [float(v) for v in rep.target4],
        "measured2_re": [float(v) for v in rep.measured2.real],
        "measured2_im": [float(v) for v in rep.measured2.imag],
        "measured4_re": [float(v) for v in rep.measured4.real],
        "measured4_im": [float(v) for v in rep.measured4.imag],
        "dev2": [float(v) for v in dev2],
        "dev4": [float(v) for v in dev4],
    }
    if rep.max_identity_dev2 is not None:
        doc["max_identity_dev2"] = rep.max_identity_dev2
        doc["max_identity_dev4"] = rep.max_identity_dev4
    if rep.stderr2 is not None:
        doc["stderr2"] = [float(v) for v in rep.stderr2]
        doc["stderr4"] = [float(v) for v in rep.stderr4]
        doc["n_paths"] = rep.n_paths
    return doc


def _breach_times(rep, tol2, tol4) -> list:
    """Times where a deviation exceeds its allowance (fixed or 3 stderr).

    The ensemble allowance carries a tiny absolute floor: at t = 0 the
    ensemble is deterministic, so stderr is 0 and the only deviation is
    the roundoff of averaging n identical launch values.
    """
    dev2 = np.abs(rep.measured2 - rep.target2)
    dev4 = np.abs(rep.measured4 - rep.target4)
    if rep.stderr2 is None:
        bad = (dev2 > tol2) | (dev4 > tol4)
    else:
        atol = 1e-12
        bad = ((dev2 > _ENSEMBLE_SIGMA * rep.stderr2 + atol)
               | (dev4 > _ENSEMBLE_SIGMA * rep.stderr4 + atol))
    return [float(t) for t in rep.times[bad]]


def cmd_moments(args) -> int:
    params, config = _resolve(args, {
        "kappa": _REQUIRED, "y0": _REQUIRED, "steps": 256, "T": 1.0,
        "mode": "both", "paths": 10_000, "stream": 0,
        "seed": 0, "workers": 1, "out": None,
    })
    mode = params["mode"]
    if mode not in ("quadrature", "ensemble", "both"):
        raise ValidationError(f"mode must be quadrature, ensemble or both; got {mode!r}")
    kappa = float(params["kappa"])
    y0 = float(params["y0"])
    steps = _positive_int(params, "steps")
    horizon = float(params["T"])
    reports = []
    if mode in ("quadrature", "both"):
        reports.append(quadrature_moment_check(
            kappa, y0, steps, horizon, seed=int(params["seed"]),
            stream=int(params["stream"])))
    if mode in ("ensemble", "both"):
        reports.append(ensemble_moment_check(
            kappa, y0, steps, horizon, n_paths=_positive_int(params, "paths"),
            seed=int(params["seed"])))
    breaches = {}
    for rep in reports:
        bad = _breach_times(rep, _QUAD_TOL2, _QUAD_TOL4)
        if bad:
            breaches[rep.mode] = bad
    doc = _meta("moments", params, config, {
        "reports": [_moment_doc(r) for r in reports],
        "tolerances": {"quadrature2": _QUAD_TOL2, "quadrature4": _QUAD_TOL4,
                       "ensemble_sigma": _ENSEMBLE_SIGMA},
        "breaches": breaches,
    })
    _emit_json(doc, params["out"])
    if breaches:
        for mode_name, times in breaches.items():
            head = ", ".join(f"{t:.6g}" for t in times[:10])
            more = "" if len(times) <= 10 else f" (+{len(times) - 10} more)"
            print(f"error: {mode_name} moment deviation exceeds tolerance at "
                  f"t = {head}{more}", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# converge


def cmd_converge(args) -> int:
    params, config = _resolve(args, {
        "kappa": _REQUIRED, "min_level": 8, "max_level": 13, "paths": 20,
        "y0": 0.1, "T": 1.0, "seed": 0, "workers": 1, "out": None,
    })
    lo = _positive_int(params, "min_level")
    hi = _positive_int(params, "max_level")
    rep = self_convergence(
        float(params["kappa"]), lo, hi, _positive_int(params, "paths"),
        float(params["y0"]), float(params["T"]), seed=int(params["seed"]),
        workers=_positive_int(params, "workers"))
    doc = _meta("converge", params, config, {
        "levels": list(rep.levels),
        "median_sup": list(rep.median_sup),
        "median_l2": list(rep.median_l2),
        "monotone_sup": rep.monotone_sup,
        "monotone_l2": rep.monotone_l2,
        "order_sup": rep.order_sup if math.isfinite(rep.order_sup) else None,
    })
    _emit_json(doc, params["out"])
    if not (rep.monotone_sup and rep.monotone_l2):
        which = []
        if not rep.monotone_sup:
            which.append(f"sup medians {list(rep.median_sup)}")
        if not rep.monotone_l2:
            which.append(f"L2 medians {list(rep.median_l2)}")
        print("error: coupled distances are not strictly decreasing: "
              + "; ".join(which), file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# dimension


def _fit_doc(fit, source: str) -> dict:
    return {"source": source, "method": fit.method, "dimension": fit.dimension,
            "intercept": fit.intercept, "r2": fit.r2,
            "scales": [float(s) for s in fit.scales],
            "counts": [float(c) for c in fit.counts]}


def _fits_for(trace, method: str, offsets: int, source: str,
              coarse: float = 3.0, fine: float = 9.0) -> list:
    fits = []
    if method in ("box", "both"):
        fits.append(_fit_doc(box_dimension(trace, coarse_exp=coarse,
                                           fine_exp=fine, offsets=offsets),
                             source))
    if method in ("yardstick", "both"):
        fits.append(_fit_doc(yardstick_dimension(trace), source))
    return fits


def _dimension_worker(job) -> list:
    (kind, kappa, reinforce, hurst, steps, y0, horizon, seed, stream,
     samples, method, offsets) = job
    spec = _make_spec(kind, kappa, reinforce, hurst, seed)
    schedule = FidelitySchedule.practical(steps, y0, horizon)
    fan = draw_curve(sample_driving(spec, schedule.mesh(), stream=stream),
                     schedule.y0, samples=samples)
    # Fresh simulations measure the drawn curve; the scale window matches
    # its sampling density (counts hit the point-spacing floor past 2^6.5).
    return _fits_for(fan, method, offsets, f"stream {stream}",
                     coarse=2.5, fine=6.5)


def cmd_dimension(args) -> int:
    params, config = _resolve(args, {
        "input": None, "kind": "sle", "kappa": None, "reinforce": None,
        "hurst": None, "steps": 131072, "y0": 0.01, "T": 1.0, "paths": 1,
        "samples": 8192, "method": "box", "offsets": 1, "seed": 0,
        "workers": 1, "out": None,
    })
    method = params["method"]
    if method not in ("box", "yardstick", "both"):
        raise ValidationError(f"method must be box, yardstick or both; got {method!r}")
    offsets = int(params["offsets"])
    fits = []
    if params["input"]:
        inputs = params["input"]
        if isinstance(inputs, str):
            inputs = [inputs]
        if params["kappa"] is not None:
            raise ValidationError("give either --input traces or simulation "
                                  "parameters, not both")
        for path in inputs:
            try:
                trace = read_trace_csv(path)
            except OSError as e:
                raise CliError(f"cannot read {path}: {e}") from e
            fits.extend(_fits_for(trace, method, offsets, path))
    else:
        if params["kappa"] is None:
            raise ValidationError("need --kappa (or --input traces)")
        jobs = [(params["kind"], float(params["kappa"]), params["reinforce"],
                 params["hurst"], _positive_int(params, "steps"),
                 float(params["y0"]), float(params["T"]), int(params["seed"]),
                 stream, _positive_int(params, "samples"), method, offsets)
                for stream in range(_positive_int(params, "paths"))]
        for row in map_indexed(_dimension_worker, jobs,
                               _positive_int(params, "workers")):
            fits.extend(row)
    summary = {}
    for m in ("box", "yardstick"):
        dims = [f["dimension"] for f in fits if f["method"] == m]
        if dims:
            err = (float(np.std(dims, ddof=1) / math.sqrt(len(dims)))
                   if len(dims) > 1 else 0.0)
            summary[m] = {"mean_dimension": float(np.mean(dims)),
                          "stderr": err, "fits": len(dims)}
    doc = _meta("dimension", params, config, {"fits": fits, "summary": summary})
    _emit_json(doc, params["out"])
    return 0


# ---------------------------------------------------------------------------
# sweep


def _float_list(value, key: str) -> list:
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
        try:
            return [float(p) for p in parts]
        except ValueError as e:
            raise ValidationError(f"{key}: expected comma-separated floats; "
                                  f"got {value!r}") from e
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    raise ValidationError(f"{key}: expected a list; got {value!r}")


def cmd_sweep(args) -> int:
    params, config = _resolve(args, {
        "kappas": "3,4,5,6", "hursts": "0.4,0.5,0.6,0.7", "paths": 5,
        "steps": 16384, "y0": 0.01, "T": 1.0, "samples": 2048, "offsets": 1,
        "seed": 0, "workers": 1, "out": _REQUIRED,
    })
    kappas = _float_list(params["kappas"], "kappas")
    hursts = _float_list(params["hursts"], "hursts")
    result = dimension_sweep(
        kappas, hursts, _positive_int(params, "paths"),
        _positive_int(params, "steps"), float(params["y0"]),
        float(params["T"]), seed=int(params["seed"]),
        workers=_positive_int(params, "workers"),
        samples=_positive_int(params, "samples"),
        offsets=int(params["offsets"]))
    lines = ["kappa,hurst,mean_df,stderr,paths,M"]
    for c in result.cells:
        lines.append("%.17g,%.17g,%.17g,%.17g,%d,%d"
                     % (c.kappa, c.hurst, c.mean_dimension, c.stderr,
                        c.paths, c.steps))
    out = params["out"]
    _write_text(out, "\n".join(lines) + "\n")
    print(f"wrote {out}")
    doc = _meta("sweep", params, config, {
        "tau_kappa": result.tau_kappa if math.isfinite(result.tau_kappa) else None,
        "tau_hurst": result.tau_hurst if math.isfinite(result.tau_hurst) else None,
        "cells": [{"kappa": c.kappa, "hurst": c.hurst,
                   "mean_dimension": c.mean_dimension, "stderr": c.stderr,
                   "dimensions": list(c.dimensions)} for c in result.cells],
    })
    _emit_json(doc, _sidecar(out))
    return 0


# ---------------------------------------------------------------------------
# interpolate


def cmd_interpolate(args) -> int:
    params, config = _resolve(args, {
        "input": _REQUIRED, "power": _REQUIRED, "refine": _REQUIRED,
        "seed": 0, "workers": 1, "out": _REQUIRED,
    })
    try:
        path = read_driving_csv(params["input"])
    except OSError as e:
        raise CliError(f"cannot read {params['input']}: {e}") from e
    refined = power_interpolate(path, float(params["power"]),
                                _positive_int(params, "refine"))
    out = params["out"]
    _write_text(out, driving_csv(refined))
    print(f"wrote {out}")
    _emit_json(_meta("interpolate", params, config, {
        "points_in": len(path.values), "points_out": len(refined.values),
    }), _sidecar(out))
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_universal(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes; never affects results (default 1)")
    p.add_argument("--out", default=None, help="output file")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slesplit",
        description="Loewner traces by the splitting scheme: simulation, "
                    "moment verification, convergence and dimension studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trace and write CSV/JSON (and SVG)")
    p.add_argument("--kind", choices=("sle", "nrsle", "fsle"))
    p.add_argument("--kappa", type=float)
    p.add_argument("--reinforce", type=float, help="reinforcement strength p (nrsle)")
    p.add_argument("--hurst", type=float, help="Hurst index H (fsle)")
    p.add_argument("--steps", type=int, help="number of mesh steps M")
    p.add_argument("--y0", type=float, help="initial height of the tracking point")
    p.add_argument("--theory", type=int, metavar="N",
                   help="theory-backed schedule: y0 = N^-1/2, M = ceil(T(4N+1)^3)")
    p.add_argument("--T", type=float, help="time horizon (default 1)")
    p.add_argument("--shift", action="store_const", const=True,
                   help="add the terminal driving value to every point")
    p.add_argument("--stream", type=int, help="path stream index (default 0)")
    p.add_argument("--svg", help="also render the trace to this SVG file")
    _add_universal(p)

    p = sub.add_parser("moments", help="verify second and fourth moments")
    p.add_argument("--kappa", type=float)
    p.add_argument("--y0", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--mode", choices=("quadrature", "ensemble", "both"))
    p.add_argument("--paths", type=int, help="ensemble size (default 10000)")
    p.add_argument("--stream", type=int)
    _add_universal(p)

    p = sub.add_parser("converge", help="coupled self-convergence across dyadic meshes")
    p.add_argument("--kappa", type=float)
    p.add_argument("--min-level", dest="min_level", type=int,
                   help="coarsest mesh exponent (default 8)")
    p.add_argument("--max-level", dest="max_level", type=int,
                   help="finest mesh exponent (default 13)")
    p.add_argument("--paths", type=int)
    p.add_argument("--y0", type=float)
    p.add_argument("--T", type=float)
    _add_universal(p)

    p = sub.add_parser("dimension", help="fractal dimension of traces")
    p.add_argument("--input", action="append", help="trace CSV (repeatable)")
    p.add_argument("--kind", choices=("sle", "nrsle", "fsle"), default=None)
    p.add_argument("--kappa", type=float)
    p.add_argument("--reinforce", type=float)
    p.add_argument("--hurst", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--y0", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--samples", type=int,
                   help="curve points drawn per fresh simulation (default 8192)")
    p.add_argument("--method", choices=("box", "yardstick", "both"))
    p.add_argument("--offsets", type=int, choices=(1, 4))
    _add_universal(p)

    p = sub.add_parser("sweep", help="dimension grid over (kappa, Hurst)")
    p.add_argument("--kappas", help="comma-separated kappa values")
    p.add_argument("--hursts", help="comma-separated Hurst values")
    p.add_argument("--paths", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--y0", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--samples", type=int,
                   help="curve points drawn per path (default 2048)")
    p.add_argument("--offsets", type=int, choices=(1, 4))
    _add_universal(p)

    p = sub.add_parser("interpolate", help="power-law refine a driving CSV")
    p.add_argument("--input", help="driving CSV with header t,value")
    p.add_argument("--power", type=float, help="interpolation exponent (> 0)")
    p.add_argument("--refine", type=int, help="subdivision factor (>= 1)")
    _add_universal(p)

    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "converge": cmd_converge,
    "dimension": cmd_dimension,
    "sweep": cmd_sweep,
    "interpolate": cmd_interpolate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except SingularityError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FbmSynthesisError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
