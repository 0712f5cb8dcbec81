"""Command-line interface.

    spinbus run scenario.json
    spinbus reproduce table1 --out results/
    spinbus optimal --n 100

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__, ffq, maps, mbq, protocols
from .model import ChainSpec, SpecError, optimal_coupling_estimate, transfer_time_estimate, validate_spec

log = logging.getLogger("spinbus")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

KINDS = ("gate", "repeat", "gradual", "cut", "lambda-sweep", "optimize", "scaling")
TARGETS = ("fig1a", "fig1b", "fig3a", "fig3b", "fig3c", "fig3d", "table1")

NUMERICAL_ERRORS = (
    ffq.ConvergenceError,
    ffq.ZeroModeError,
    mbq.KrylovError,
    mbq.DegenerateGroundState,
    maps.ProcessMapError,
    protocols.ProtocolError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


class ConfigError(ValueError):
    pass


# -- scenarios -------------------------------------------------------------

_NUM = (int, float)
# key -> (accepted types, default); REQUIRED marks mandatory keys
REQUIRED = object()
_COMMON = {
    "kind": (str, REQUIRED),
    "n_bus": (int, REQUIRED),
    "j": (_NUM, 1.0),
    "j0": (_NUM, None),
    "lambda": (_NUM, 0.0),
    "extra_left": (int, 0),
    "extra_right": (int, 0),
    "engine": (str, "auto"),
    "timing": (str, "optimized"),
    "output": (dict, None),
    "tolerances": (dict, None),
}
_BY_KIND = {
    "gate": {"t_end": (_NUM, None), "n_times": (int, 201), "checkpoints": (list, None)},
    "repeat": {"k_max": (int, 8), "mode": (str, "continuous")},
    "gradual": {"taus": (list, REQUIRED), "retime": (bool, True)},
    "cut": {
        "delta_e_max": (_NUM, 30.0),
        "ramp_time": (_NUM, 100.0),
        "n_times": (int, 101),
        "delta_e_values": (list, None),
        "retime": (bool, False),
    },
    "lambda-sweep": {"lambdas": (list, REQUIRED), "retime": (bool, True)},
    "optimize": {},
    "scaling": {"n_values": (list, REQUIRED)},
}
_OUTPUT_KEYS = {"dir": str, "format": str, "name": str}
_TOLERANCE_KEYS = {"krylov": _NUM, "ramp_ffq": _NUM, "ramp_mbq": _NUM}


@dataclass
class Scenario:
    kind: str
    spec: ChainSpec
    engine: str = "auto"
    timing: str = "optimized"
    params: dict = field(default_factory=dict)
    out_dir: str | None = None
    out_format: str = "csv"
    out_name: str | None = None
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    j0_given: bool = True
    # values fixed at run time (e.g. the optimised j0), echoed in the metadata
    resolved: dict = field(default_factory=dict)


def _check_type(key, value, types):
    if types is _NUM or types == _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif types is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, types)
    if not ok:
        name = "number" if types == _NUM else getattr(types, "__name__", str(types))
        raise ConfigError(f"key {key!r}: expected {name}, got {type(value).__name__}")


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"key 'kind': must be one of {', '.join(KINDS)}")
    schema = dict(_COMMON)
    schema.update(_BY_KIND[kind])
    if kind == "scaling":
        schema["n_bus"] = (int, None)
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(repr(k) for k in unknown)}")
    values = {}
    for key, (types, default) in schema.items():
        if key in data and data[key] is not None:
            _check_type(key, data[key], types)
            values[key] = data[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            values[key] = default
    engine = values.pop("engine")
    if engine not in protocols.ENGINES:
        raise ConfigError(f"key 'engine': must be one of {', '.join(protocols.ENGINES)}")
    timing = values.pop("timing")
    if timing not in ("optimized", "formula"):
        raise ConfigError("key 'timing': must be 'optimized' or 'formula'")
    n = values.pop("n_bus")
    j0 = values.pop("j0")
    j0_given = j0 is not None
    lam = float(values.pop("lambda"))
    if engine == "ffq" and lam != 0:
        raise ConfigError("ffq requires λ=0")
    if kind == "scaling":
        n = n or min(values["n_values"])
    if n is None or n < 1:
        raise ConfigError("key 'n_bus': must be a positive integer")
    if j0 is None:
        j0 = optimal_coupling_estimate(n, values["j"])
    spec = ChainSpec(
        n_bus=n, j=float(values.pop("j")), j0=float(j0), lam=lam,
        extra_left=values.pop("extra_left"), extra_right=values.pop("extra_right"),
    )
    try:
        validate_spec(spec)
    except SpecError as exc:
        raise ConfigError(str(exc)) from exc
    output = values.pop("output") or {}
    for key, value in output.items():
        if key not in _OUTPUT_KEYS:
            raise ConfigError(f"unknown key 'output.{key}'")
        _check_type(f"output.{key}", value, _OUTPUT_KEYS[key])
    tolerances = values.pop("tolerances") or {}
    for key, value in tolerances.items():
        if key not in _TOLERANCE_KEYS:
            raise ConfigError(f"unknown key 'tolerances.{key}'")
        _check_type(f"tolerances.{key}", value, _TOLERANCE_KEYS[key])
    fmt = output.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("key 'output.format': must be 'csv' or 'json'")
    if kind == "repeat" and values["mode"] not in ("reprepare", "continuous"):
        raise ConfigError("key 'mode': must be 'reprepare' or 'continuous'")
    return Scenario(
        kind, spec, engine, timing, values, output.get("dir"), fmt,
        output.get("name"), tolerances, dict(data), j0_given,
    )


def parse_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return scenario_from_dict(data)


# -- output ----------------------------------------------------------------


def fmt_float(x) -> str:
    return "%.12g" % x


def _clean(x):
    if isinstance(x, (float, np.floating)):
        return float(fmt_float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


@dataclass
class Table:
    name: str
    columns: list
    rows: list
    summary: str = ""


def render(table: Table, metadata: dict, fmt: str) -> str:
    if fmt == "json":
        doc = {
            "metadata": metadata,
            "columns": table.columns,
            "rows": [[_clean(v) for v in row] for row in table.rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    for line in json.dumps(metadata, sort_keys=True, indent=1).splitlines():
        buf.write("# " + line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_table(table: Table, metadata: dict, out_dir: str | None, fmt: str, name=None) -> str | None:
    text = render(table, metadata, fmt)
    if out_dir is None:
        sys.stdout.write(text)
        return None
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name or table.name}.{fmt}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _metadata(scenario, engine, tolerances):
    return {
        "scenario": scenario,
        "engine": engine,
        "code_version": __version__,
        "kernel_backend": mbq.kernels.BACKEND,
        "tolerances": tolerances,
        "units": "J = 1, time in 1/J",
    }


DEFAULT_TOLERANCES = {"krylov": 1e-10, "ramp_ffq": 1e-9, "ramp_mbq": 1e-8}


def apply_tolerances(tol: dict) -> dict:
    merged = {**DEFAULT_TOLERANCES, **tol}
    mbq.TOLERANCES["krylov"] = float(merged["krylov"])
    mbq.TOLERANCES["ramp"] = float(merged["ramp_mbq"])
    ffq.RAMP_TOL["ramp"] = float(merged["ramp_ffq"])
    return merged


# -- scenario execution ----------------------------------------------------


def _times(spec, scenario):
    """Checkpoint t*: closed form, or the transfer peak for the chosen j0."""
    if scenario.timing == "formula":
        return transfer_time_estimate(spec.n_bus, spec.j)
    return protocols.peak_time(spec.n_bus, spec.j0)


def resolve_spec(s: Scenario) -> ChainSpec:
    """Spec used at run time.

    Without an explicit ``j0`` the parsed spec carries the closed-form
    estimate; ``optimized`` timing replaces it by the numerical optimum.
    """
    spec = s.spec
    if s.timing == "optimized" and not s.j0_given and s.kind not in ("optimize", "scaling"):
        spec = spec.replace(j0=protocols.optimize(spec.n_bus).j0_opt)
    s.resolved = {"j0": spec.j0}
    return spec


def run_scenario(s: Scenario, cap_sites=mbq.DEFAULT_CAP_SITES, workers=1) -> Table:
    spec, p = resolve_spec(s), s.params
    if s.kind == "gate":
        t_star = _times(spec, s)
        t_end = p["t_end"]
        checkpoints = [float(c) for c in (p["checkpoints"] or [])] + [t_star]
        res = protocols.run_gate(spec, s.engine, t_end=t_end, n_times=p["n_times"],
                                 checkpoints=checkpoints, t_star=t_star, cap_sites=cap_sites)
        rows = [[float(t), float(g), float(m)] for t, g, m in zip(res.times, res.f_g, res.f_m)]
        f = res.at(t_star)[0]
        return Table("gate", ["t_in_1_over_J", "F_G", "F_M"], rows, f"F_G(t*)={f:.3f}")
    if s.kind == "repeat":
        t_star = _times(spec, s)
        rows = protocols.run_repeated(spec, p["k_max"], t_star=t_star, mode=p["mode"],
                                      engine=s.engine, cap_sites=cap_sites)
        rows = [[int(k), float(g), float(m)] for k, g, m in rows]
        return Table("repeat", ["k", "F_G", "F_M"], rows, f"{len(rows)} rows")
    if s.kind == "gradual":
        t_star = _times(spec, s)
        taus = [float(x) for x in p["taus"]]
        vals = protocols.parallel_map(
            lambda tau: protocols.run_gradual(spec, tau, t_star, s.engine, p["retime"], cap_sites),
            taus, workers,
        )
        rows = sorted([[tau, float(v)] for tau, v in zip(taus, vals)])
        return Table("gradual", ["tau", "F_G"], rows, f"{len(rows)} rows")
    if s.kind == "cut":
        if p["delta_e_values"]:
            t_star = protocols.peak_time(spec.n_bus, spec.j0)
            des = sorted(float(x) for x in p["delta_e_values"])
            vals = protocols.parallel_map(
                lambda de: protocols.run_post_cut_gate(spec, de, t_star, p["ramp_time"],
                                                       cap_sites=cap_sites, retime=p["retime"]),
                des, workers,
            )
            rows = [[de, float(v)] for de, v in zip(des, vals)]
            return Table("cut", ["deltaE_over_J", "F_G"], rows, f"{len(rows)} rows")
        res = protocols.run_cut_glue(spec.replace(j0=0.0), p["delta_e_max"], p["ramp_time"], p["n_times"])
        rows = [[float(t), float(a), float(b)] for t, a, b in zip(res.times, res.f_m_cut, res.f_glue)]
        return Table("cut", ["t", "F_M_cut", "F_glue"], rows,
                     f"F_M_end={res.f_m_cut[-1]:.4f} F_glue_end={res.f_glue[-1]:.4f}")
    if s.kind == "lambda-sweep":
        t_star = _times(spec.replace(lam=0.0), s)
        lams = sorted(float(x) for x in p["lambdas"])
        vals = protocols.sweep_lambda(spec, lams, t_star, cap_sites, workers, retime=p["retime"])
        rows = [[lam, float(v)] for lam, v in zip(lams, vals)]
        return Table("lambda_sweep", ["lambda", "F_G"], rows, f"{len(rows)} rows")
    if s.kind == "optimize":
        opt = protocols.optimize(spec.n_bus)
        rows = [[opt.n, opt.j0_opt, opt.t_opt, opt.peak]]
        return Table("optimize", ["N", "J0_opt", "t_opt", "peak"], rows,
                     f"J0_opt={opt.j0_opt:.4f} t_opt={opt.t_opt:.4f}")
    if s.kind == "scaling":
        ns = sorted(int(n) for n in p["n_values"])
        optima = protocols.parallel_map(protocols.optimize, ns, workers)
        fit = protocols.fit_scaling(ns, optima)
        rows = [[o.n, o.j0_opt, o.t_opt, o.peak] for o in optima]
        return Table("scaling", ["N", "J0_opt", "t_opt", "peak"], rows,
                     f"prefactor={fit.prefactor:.4f} exponent={fit.exponent:.4f} "
                     f"a={fit.a:.4f} b={fit.b:.4f}")
    raise ConfigError(f"unsupported kind {s.kind!r}")


# -- reproduction targets --------------------------------------------------


def _capped_bus(n_bus, extra, cap_sites, fallback=10):
    if n_bus + 2 + 2 * extra <= cap_sites:
        return n_bus
    log.warning("%d sites exceed the dense-engine cap %d; using N=%d", n_bus + 2 + 2 * extra,
                cap_sites, fallback)
    return fallback


def reproduce(target: str, engine="auto", cap_sites=mbq.DEFAULT_CAP_SITES, workers=1) -> Table:
    if target == "fig1a":
        spec = ChainSpec(n_bus=100, j0=0.5)
        t_star = protocols.peak_time(100, 0.5)
        res = protocols.run_gate(spec, engine, t_end=40.0, n_times=401, t_star=t_star)
        rows = [[float(t), float(f)] for t, f in zip(res.times, res.f_g)]
        tp, fp = res.peak()
        return Table("fig1a", ["t_in_1_over_J", "F_G"], rows, f"peak F_G={fp:.4f} at t={tp:.2f}")
    if target == "fig1b":
        def one(n):
            opt = protocols.optimize(n)
            res = protocols.run_gate(ChainSpec(n_bus=n, j0=opt.j0_opt), engine,
                                     checkpoints=[opt.t_opt], t_star=opt.t_opt)
            return [n, opt.j0_opt, opt.t_opt, res.at(opt.t_opt)[0]]
        rows = protocols.parallel_map(one, range(10, 101, 10), workers)
        return Table("fig1b", ["N", "J0", "t_star", "F_G"], rows,
                     f"min F_G={min(r[3] for r in rows):.4f}")
    if target == "fig3a":
        res = protocols.run_cut_glue(ChainSpec(n_bus=16, extra_left=4, extra_right=4))
        rows = [[float(t), float(a), float(b)] for t, a, b in zip(res.times, res.f_m_cut, res.f_glue)]
        return Table("fig3a", ["t", "F_M_cut", "F_glue"], rows,
                     f"F_M_end={res.f_m_cut[-1]:.4f} F_glue_end={res.f_glue[-1]:.4f}")
    if target == "fig3b":
        opt = protocols.optimize(16)
        spec = ChainSpec(n_bus=16, j0=opt.j0_opt)
        taus = np.round(np.arange(0.0, 3.0 * opt.t_opt + 1e-9, 0.25), 10).tolist()
        vals = protocols.parallel_map(
            lambda tau: protocols.run_gradual(spec, tau, opt.t_opt, engine, True, cap_sites),
            taus, workers,
        )
        rows = [[tau, float(v)] for tau, v in zip(taus, vals)]
        return Table("fig3b", ["tau", "F_G"], rows, f"F_G(tau=0)={rows[0][1]:.4f}")
    if target == "fig3c":
        n = _capped_bus(16, 4, cap_sites)
        opt = protocols.optimize(n)
        spec = ChainSpec(n_bus=n, j0=opt.j0_opt, extra_left=4, extra_right=4)
        des = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0]
        vals = protocols.parallel_map(
            lambda de: protocols.run_post_cut_gate(spec, de, opt.t_opt, cap_sites=cap_sites),
            des, workers,
        )
        rows = [[de, float(v)] for de, v in zip(des, vals)]
        return Table("fig3c", ["deltaE_over_J", "F_G"], rows, f"N={n}")
    if target == "fig3d":
        n = _capped_bus(16, 0, cap_sites)
        opt = protocols.optimize(n)
        lams = np.round(np.linspace(-0.5, 0.5, 21), 10).tolist()
        vals = protocols.sweep_lambda(ChainSpec(n_bus=n, j0=opt.j0_opt), lams, opt.t_opt,
                                      cap_sites, workers, retime=True)
        rows = [[lam, float(v)] for lam, v in zip(lams, vals)]
        return Table("fig3d", ["lambda", "F_G"], rows, f"N={n}")
    if target == "table1":
        opt = protocols.optimize(8)
        # re-preparation is the reading that matches the published rows
        rows = protocols.run_repeated(ChainSpec(n_bus=8, j0=opt.j0_opt), 8, t_star=opt.t_opt,
                                      mode="reprepare")
        rows = [[int(k), float(g), float(m)] for k, g, m in rows]
        return Table("table1", ["k", "F_G", "F_M"], rows,
                     f"k=1: F_G={rows[0][1]:.3f} F_M={rows[0][2]:.3f} (reprepare)")
    raise ConfigError(f"unknown target {target!r}")


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinbus", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--engine", choices=protocols.ENGINES, default=None)
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--cap-sites", type=int, default=mbq.DEFAULT_CAP_SITES)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run a JSON scenario")
    run.add_argument("scenario")
    rep = sub.add_parser("reproduce", parents=[common], help="regenerate a figure or table dataset")
    rep.add_argument("target", choices=TARGETS)
    opt = sub.add_parser("optimal", parents=[common], help="optimal coupling and time")
    opt.add_argument("--n", type=int, required=True)
    return parser


def _dispatch(args):
    if args.command == "run":
        scenario = parse_scenario(args.scenario)
        if args.engine:
            if args.engine == "ffq" and scenario.spec.lam != 0:
                raise ConfigError("ffq requires λ=0")
            scenario.engine = args.engine
        fmt = args.format or scenario.out_format
        out_dir = args.out or scenario.out_dir
        tolerances = apply_tolerances(scenario.tolerances)
        table = run_scenario(scenario, args.cap_sites, args.workers)
        meta = _metadata(scenario.raw, scenario.engine, tolerances)
        meta["resolved"] = scenario.resolved
        path = write_table(table, meta, out_dir, fmt, scenario.out_name)
    elif args.command == "reproduce":
        table = reproduce(args.target, args.engine or "auto", args.cap_sites, args.workers)
        meta = _metadata({"reproduce": args.target}, args.engine or "auto", DEFAULT_TOLERANCES)
        path = write_table(table, meta, args.out, args.format or "csv")
    else:
        if args.n < 1:
            raise ConfigError("--n must be positive")
        o = protocols.optimize(args.n)
        table = Table("optimal", ["N", "J0_opt", "t_opt", "peak"], [[o.n, o.j0_opt, o.t_opt, o.peak]],
                      f"J0_opt={o.j0_opt:.4f} t_opt={o.t_opt:.4f}")
        meta = _metadata({"optimal": args.n}, "ffq", DEFAULT_TOLERANCES)
        path = write_table(table, meta, args.out, args.format or "csv")
    if path is None:
        print(table.summary, file=sys.stderr)
    else:
        print(f"{table.summary} -> {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, SpecError, mbq.SizeCapError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ffq.EngineError as exc:
        if isinstance(exc, (ffq.ConvergenceError, ffq.ZeroModeError)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
