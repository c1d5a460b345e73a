"""Command-line entry point: simulate, verify, moments-ode, report, schema."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import json
import logging
import os
import sys

import numpy as np

from .mixture import INIT_KINDS, ConfigError, load_json_document, mixture_from_dict

log = logging.getLogger("mixkinetic")

EXIT_OK, EXIT_FAIL, EXIT_MISSING, EXIT_INVALID = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
TOP_LEVEL_KEYS = {"species", "kernel", "sim", "harness", "description"}


def config_schema() -> dict:
    from .harness import Settings
    from .simulator import SimConfig

    def props(cls):
        out = {}
        for f in dataclasses.fields(cls):
            default = f.default if f.default is not dataclasses.MISSING else None
            kind = {int: "integer", float: "number", bool: "boolean"}.get(type(default), "number")
            if isinstance(default, tuple):
                out[f.name] = {"type": "array", "items": {"type": "integer"}, "default": list(default)}
            else:
                out[f.name] = {"type": [kind, "null"] if default is None else kind, "default": default}
        return out

    matrix = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}]}
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "mixkinetic configuration",
        "type": "object",
        "required": ["species", "kernel"],
        "additionalProperties": False,
        "properties": {
            "description": {"type": "string"},
            "species": {
                "type": "array", "minItems": 1,
                "items": {
                    "type": "object", "required": ["mass"],
                    "properties": {
                        "mass": {"type": "number", "exclusiveMinimum": 0,
                                 "description": "raw mass; masses are normalized to sum to 1"},
                        "init": {"type": "object", "properties": {
                            "kind": {"enum": list(INIT_KINDS)},
                            "params": {"type": "object", "description":
                                       "density, temperature, mean (gaussian); p, scale (heavy_tail); radius"}}},
                    },
                },
            },
            "kernel": {
                "type": "object", "required": ["lambda", "s"],
                "properties": {"lambda": matrix, "s": matrix, "kappa": matrix},
                "description": "scalars broadcast to every pair; matrices must be symmetric, lambda in (0,2], s in (0,2)",
            },
            "sim": {"type": "object", "additionalProperties": False,
                    "properties": {**props(SimConfig), "angular_cutoff": {"type": "number", "description": "alias of eps"}}},
            "harness": {"type": "object", "additionalProperties": False, "properties": props(Settings)},
        },
    }


def load_config(path: str):
    """(document, MixtureConfig, SimConfig, Settings); raises FileNotFoundError or ConfigError."""
    from .harness import Settings
    from .simulator import SimConfig

    if not os.path.isfile(path):
        raise FileNotFoundError(path)
    doc = load_json_document(path)
    unknown = sorted(set(doc) - TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError([(k, "unknown top-level key") for k in unknown])
    cfg = mixture_from_dict(doc)
    sim_doc = dict(doc.get("sim", {}))
    if "angular_cutoff" in sim_doc:
        if "eps" in sim_doc:
            raise ConfigError([("sim.angular_cutoff", "give either eps or angular_cutoff, not both")])
        sim_doc["eps"] = sim_doc.pop("angular_cutoff")
    known = {f.name for f in dataclasses.fields(SimConfig)}
    bad = sorted(set(sim_doc) - known)
    if bad:
        raise ConfigError([(f"sim.{k}", "unknown setting") for k in bad])
    try:
        sim = SimConfig(**sim_doc)
    except TypeError as exc:
        raise ConfigError([("sim", str(exc))]) from None
    sim.validate()
    settings = Settings.from_dict(doc.get("harness"))
    return doc, cfg, sim, settings


def build_parser() -> argparse.ArgumentParser:
    from .harness import EXPERIMENTS

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON configuration file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("--eps", type=float, help="override the angular cutoff")

    p = argparse.ArgumentParser(prog="mixkinetic", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the particle simulator")
    v = sub.add_parser("verify", parents=[common], help="run named experiments")
    v.add_argument("experiment", help=f"one of {', '.join(EXPERIMENTS)} or all")
    o = sub.add_parser("moments-ode", help="integrate x' = -A x^(1+c) + B and compare with its bounds")
    for name, default in (("A", 1.0), ("B", 1.0), ("c", 1.0), ("x0", 0.0), ("T", 5.0), ("dt", 1e-3)):
        o.add_argument(f"--{name}", type=float, default=default)
    o.add_argument("--out", help="write the trajectory as ode.csv here")
    r = sub.add_parser("report", help="rebuild summary.md from report_*.json")
    r.add_argument("--out", required=True)
    sub.add_parser("schema", help="print the configuration schema")
    return p


def _setup_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("MIXKINETIC_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def cmd_simulate(args, doc, cfg, sim) -> int:
    from .moments import config_hash
    from .simulator import run, write_grid

    if args.seed is not None:
        sim = dataclasses.replace(sim, seed=args.seed)
    if args.eps is not None:
        sim = dataclasses.replace(sim, eps=args.eps)
    sim.validate()
    res = run(cfg, sim)
    os.makedirs(args.out, exist_ok=True)
    h = config_hash({**doc, "sim": dataclasses.asdict(sim)})
    res.table.to_csv(os.path.join(args.out, "moments.csv"), config_hash=h)
    for t, g in res.grids:
        write_grid(os.path.join(args.out, f"grid_{t:.6f}.bin"), g)
    audit = {**res.audit, "config_hash": h, "seed": sim.seed,
             "temperatures": np.asarray(res.temperatures).tolist()}
    with open(os.path.join(args.out, "audit.json"), "w") as fh:
        json.dump(audit, fh, indent=2, default=lambda o: np.asarray(o).tolist())
    print(f"{res.audit['steps']} steps, {res.audit['accepted']} collisions; "
          f"energy drift {res.audit['energy_drift']:.2e}, momentum drift {res.audit['momentum_drift']:.2e}")
    return EXIT_OK


def cmd_verify(args, doc, cfg, settings) -> int:
    from .harness import FAIL, resolve, run_all, summary_markdown

    try:
        names = resolve(args.experiment)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_MISSING
    if args.seed is not None:
        settings = dataclasses.replace(settings, seeds=tuple(args.seed + k for k in range(len(settings.seeds))))
    if args.eps is not None:
        settings = dataclasses.replace(settings, eps=args.eps)
    settings = dataclasses.replace(settings, workers=max(1, args.workers))
    os.makedirs(args.out, exist_ok=True)
    reports = run_all(names, cfg, settings, doc)
    for r in reports:
        r.write(args.out)
    text = summary_markdown(reports)
    with open(os.path.join(args.out, "summary.md"), "w") as fh:
        fh.write(text + "\n")
    for r in reports:
        print(f"{r.name}: {r.verdict}")
    return EXIT_FAIL if any(r.verdict == FAIL for r in reports) else EXIT_OK


def cmd_moments_ode(args) -> int:
    from .moments import BernoulliODE, integrate_bernoulli, propagation_bound, super_solution

    try:
        ode = BernoulliODE(args.A, args.B, args.c, args.x0)
        t, x = integrate_bernoulli(ode, args.T, args.dt)
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sup = super_solution(ode, t[1:])
    out = {"equilibrium": ode.equilibrium, "propagation_bound": propagation_bound(ode),
           "max_x": float(x.max()), "min_super_slack": float(np.min(sup - x[1:])),
           "final_x": float(x[-1])}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "ode.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "super_solution"])
            w.writerow([repr(0.0), repr(float(x[0])), "inf"])
            for tk, xk, sk in zip(t[1:], x[1:], sup):
                w.writerow([repr(float(tk)), repr(float(xk)), repr(float(sk))])
    print(json.dumps(out, indent=2))
    ok = out["min_super_slack"] >= -1e-9 and out["max_x"] <= out["propagation_bound"] + 1e-9
    return EXIT_OK if ok else EXIT_FAIL


def cmd_report(args) -> int:
    from .harness import FAIL, summary_markdown

    paths = sorted(glob.glob(os.path.join(args.out, "report_*.json")))
    if not paths:
        print(f"error: no report_*.json under {args.out}", file=sys.stderr)
        return EXIT_MISSING
    reports = []
    for p in paths:
        with open(p) as fh:
            reports.append(json.load(fh))
    text = summary_markdown(reports)
    with open(os.path.join(args.out, "summary.md"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    return EXIT_FAIL if any(r["verdict"] == FAIL for r in reports) else EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(config_schema(), indent=2))
        return EXIT_OK
    if args.command == "moments-ode":
        return cmd_moments_ode(args)
    if args.command == "report":
        return cmd_report(args)
    try:
        doc, cfg, sim, settings = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"error: {path}: {msg}" if path else f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "simulate":
        return cmd_simulate(args, doc, cfg, sim)
    return cmd_verify(args, doc, cfg, settings)


if __name__ == "__main__":
    sys.exit(main())
