"""Command line entry point: ``densityherd run|list|feasibility|show``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import yaml

from . import scenarios
from .errors import ConfigError, DensityHerdError, Infeasible, NumericalBlowup
from .feasibility import feasibility

OUT_ENV = "DENSITYHERD_OUT"

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_BLOWUP = 0, 1, 2, 3, 4


def _error(kind: str, message: str, code: int, **extra) -> int:
    payload = {"error": kind, "message": message, "exit_code": code}
    payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _log(msg):
    print(msg, file=sys.stderr)


def _load(source, args):
    return scenarios.Scenario.from_source(source, overrides=getattr(args, "override", None) or (),
                                          seed=getattr(args, "seed", None), steps=getattr(args, "steps", None))


def cmd_run(args) -> int:
    sc = _load(args.scenario, args)
    out = args.out or os.path.join(os.environ.get(OUT_ENV, "densityherd-out"), sc.name)
    with warnings.catch_warnings():
        if not args.verbose:
            warnings.simplefilter("ignore")
        summary = scenarios.run_scenario(sc, out, log=_log if args.verbose else lambda m: None)
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return EXIT_OK


def cmd_list(args) -> int:
    items = [{"name": k, "kind": v.get("kind", "pde"), "description": v["description"]}
             for k, v in scenarios.BUILTINS.items()]
    if args.json:
        print(json.dumps(items, indent=2))
    else:
        width = max(len(i["name"]) for i in items)
        for i in items:
            print(f"{i['name']:<{width}}  {i['description']}")
    return EXIT_OK


def cmd_feasibility(args) -> int:
    sc = _load(args.scenario, args)
    if sc.kind == "feasibility_sweep":
        raise ConfigError("a sweep scenario has no single target; use 'run' instead")
    target = scenarios.build_target(sc.config)
    rep = feasibility(target, check=False)
    print(json.dumps(scenarios._feasibility_summary(rep), indent=2, sort_keys=True, default=float))
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_show(args) -> int:
    sc = _load(args.scenario, args)
    print(yaml.safe_dump(sc.config, sort_keys=False), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="densityherd", description="Leader-follower density control experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("scenario", help="built-in scenario name or path to a YAML config")
        sp.add_argument("--override", "-o", action="append", metavar="KEY=VALUE",
                        help="dotted config override, e.g. control.K_L=5 (repeatable)")
        sp.add_argument("--seed", type=int, help="master seed for agent trials")
        sp.add_argument("--steps", type=int, help="number of time steps")

    r = sub.add_parser("run", help="run a scenario and write its artifacts")
    with_config(r)
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name> or ./densityherd-out/<name>)")
    r.add_argument("--verbose", "-v", action="store_true", help="progress and numerical warnings on stderr")
    r.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="list built-in scenarios")
    ls.add_argument("--json", action="store_true")
    ls.set_defaults(func=cmd_list)

    f = sub.add_parser("feasibility", help="feasibility report for a scenario's target")
    with_config(f)
    f.set_defaults(func=cmd_feasibility)

    s = sub.add_parser("show", help="print the fully resolved config")
    with_config(s)
    s.set_defaults(func=cmd_show)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except scenarios.UnknownScenario as exc:
        name = getattr(args, "scenario", "")
        return _error("UnknownScenario", str(exc.args[0]), EXIT_CONFIG, suggestion=scenarios.suggest(name))
    except ConfigError as exc:
        return _error("ConfigError", str(exc), EXIT_CONFIG)
    except Infeasible as exc:
        return _error(type(exc).__name__, str(exc), EXIT_INFEASIBLE)
    except NumericalBlowup as exc:
        return _error("NumericalBlowup", str(exc), EXIT_BLOWUP)
    except (DensityHerdError, OSError, ValueError) as exc:
        return _error(type(exc).__name__, str(exc), EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
