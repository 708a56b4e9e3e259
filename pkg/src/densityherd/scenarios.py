"""Scenario configuration, built-in experiments and artifact emission.

A scenario is a YAML mapping with ``schema_version: 1``.  Numeric fields
accept plain numbers or small arithmetic expressions in ``pi`` such as
``pi/100``.  Built-ins carry every default, so a bare name reproduces the
reference setup; files only need the keys they change.
"""
from __future__ import annotations

import ast
import copy
import csv
import difflib
import json
import math
import operator
import os
import shutil
import tempfile
import time
from dataclasses import dataclass

import numpy as np
import yaml

from . import plots
from .agents import KdeConfig, run_discrete, write_aggregate_csv
from .errors import ConfigError, Infeasible, Infeasible2D, UnknownScenario
from .feasibility import (TargetSpec, feasibility, feasibility_sweep, uniform, von_mises)
from .grid import PeriodicField, PeriodicGrid, write_field_csv
from .kernel import KernelComponent, KernelSpec
from .pde import Disturbance, SimConfig, run

SCHEMA_VERSION = 1
KINDS = ("pde", "agents", "feasibility_sweep")

BASE = {
    "schema_version": SCHEMA_VERSION,
    "name": "custom",
    "kind": "pde",
    "description": "",
    "grid": {"dim": 1, "n": 500},
    "target": {"family": "von_mises", "kappa": 1.8, "mu": 0.0, "M_F": 0.6},
    "D": 0.05,
    "kernel": {"components": [{"weight": 1.0, "L": "pi"}], "truncation_K": 10},
    "plant_kernel": None,
    "control": {"K_L": 1.0, "scheme": "feed_forward", "alpha_rule": "conservative", "epsilon": 0.01},
    "time": {"dt": 0.001, "n_steps": 150000, "record_every": 100},
    "disturbance": None,
    "allow_infeasible": False,
    "runs": None,
    "agents": {"N_L": 400, "N_total": 1000, "N_L_values": None, "n_trials": 8, "seed": 0,
               "update_every": 1, "bandwidth": None, "workers": 1},
    "sweep": {"n": 200, "panels": []},
}

_GOVERNOR_RUNS = {
    "feed_forward": {"scheme": "feed_forward"},
    "governor": {"scheme": "reference_governor", "alpha_rule": "conservative"},
}

BUILTINS = {
    "feasibility_sweep": {
        "description": "Minimum leader mass for von Mises targets over (D, kappa), (kappa, L) and (D, L)",
        "kind": "feasibility_sweep",
        "sweep": {"n": 200, "panels": [
            {"name": "fixed_L", "param1": "D", "values1": [0.01, 0.2, 20],
             "param2": "kappa", "values2": [0.1, 4.0, 20], "fixed": {"L": "pi"}},
            {"name": "fixed_D", "param1": "kappa", "values1": [0.1, 4.0, 20],
             "param2": "L", "values2": ["pi/12", "pi", 20], "fixed": {"D": 0.05}},
            {"name": "fixed_kappa", "param1": "D", "values1": [0.01, 0.2, 20],
             "param2": "L", "values2": ["pi/12", "pi", 20], "fixed": {"kappa": 1.0}},
        ]},
    },
    "monomodal_1d_ff": {
        "description": "1D von Mises target (kappa=1.8), feed-forward regulation to the steady leader reference",
        "control": {"scheme": "feed_forward"},
    },
    "monomodal_1d_rg": {
        "description": "1D von Mises target (kappa=1.8), reference governor with the conservative alpha",
        "control": {"scheme": "reference_governor", "alpha_rule": "conservative"},
    },
    "disturbance_robustness": {
        "description": "Constant follower drift pi/100 from t_f/2: feed-forward vs conservative vs optimal alpha",
        "disturbance": {"amplitude": "pi/100", "onset_fraction": 0.5},
        "runs": {
            "feed_forward": {"scheme": "feed_forward"},
            "conservative": {"scheme": "reference_governor", "alpha_rule": "conservative"},
            "optimal": {"scheme": "reference_governor", "alpha_rule": "optimal"},
        },
    },
    "kernel_mismatch": {
        "description": "Controller assumes L=pi, followers react with L=pi/6 (D=0.02)",
        "D": 0.02,
        "plant_kernel": {"components": [{"weight": 1.0, "L": "pi/6"}]},
        "runs": _GOVERNOR_RUNS,
    },
    "discrete_ensemble": {
        "description": "1000 agents (400 leaders) driven by density estimates; 8 seeded trials",
        "kind": "agents",
        "control": {"scheme": "reference_governor", "alpha_rule": "conservative"},
    },
    "monomodal_2d_rg": {
        "description": "2D product von Mises target (k1=k2=0.5) on 50x50, reference governor, K_L=10",
        "grid": {"dim": 2, "n": 50},
        "target": {"kappa": [0.5, 0.5], "mu": [0.0, 0.0]},
        "control": {"K_L": 10.0, "scheme": "reference_governor", "alpha_rule": "conservative"},
        "time": {"dt": 0.01, "n_steps": 10000, "record_every": 10},
    },
}


# ---------------------------------------------------------------------------
# parsing helpers

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}
_NAMES = {"pi": math.pi, "e": math.e}


def parse_number(value, where="value") -> float:
    """Number or arithmetic expression in ``pi``/``e``."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a number, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError

    try:
        return float(ev(ast.parse(value.strip(), mode="eval")))
    except (SyntaxError, ValueError, ZeroDivisionError, TypeError):
        raise ConfigError(f"{where}: cannot read {value!r} as a number") from None


def _int(value, where, lo=None):
    x = parse_number(value, where)
    if x != int(x):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if lo is not None and x < lo:
        raise ConfigError(f"{where}: must be at least {lo}")
    return int(x)


def _choice(value, options, where):
    if value not in options:
        raise ConfigError(f"{where}: {value!r} is not one of {list(options)}")
    return value


def _merge(base, update, path=""):
    """Recursive dict merge; unknown keys are rejected so typos surface."""
    out = copy.deepcopy(base)
    for k, v in update.items():
        where = f"{path}{k}"
        if k not in base:
            near = difflib.get_close_matches(str(k), list(base), n=1)
            raise ConfigError(f"unknown key {where!r}" + (f"; did you mean {path + near[0]!r}?" if near else ""))
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("runs",):
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def builtin_names():
    return list(BUILTINS)


def suggest(name: str):
    m = difflib.get_close_matches(name, BUILTINS, n=1, cutoff=0.0)
    return m[0] if m else None


def builtin_config(name: str) -> dict:
    if name not in BUILTINS:
        hint = suggest(name)
        raise UnknownScenario(f"unknown scenario {name!r}" + (f"; did you mean {hint!r}?" if hint else ""))
    return _merge(BASE, dict(BUILTINS[name], name=name))


def load_config(source: str) -> dict:
    """Resolve a built-in name or a YAML file path to a full config mapping."""
    if source in BUILTINS:
        return builtin_config(source)
    if not os.path.exists(source):
        if source.endswith((".yaml", ".yml", ".json")) or os.sep in source:
            raise ConfigError(f"config file {source!r} not found")
        builtin_config(source)  # raises with a suggestion
    try:
        with open(source) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{source}: schema_version must be {SCHEMA_VERSION}")
    base = BASE
    if "extends" in raw:
        base = builtin_config(raw.pop("extends"))
    return _merge(base, raw)


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply ``dotted.key=value`` (value read as YAML) to a config mapping."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    key, text = assignment.split("=", 1)
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        raise ConfigError(f"override {assignment!r}: cannot parse value") from None
    parts = key.strip().split(".")
    update = value
    for p in reversed(parts):
        update = {p: update}
    return _merge(cfg, update)


# ---------------------------------------------------------------------------
# building objects


def _kernel(block, dim, where):
    if not isinstance(block, dict) or not block.get("components"):
        raise ConfigError(f"{where}: needs a non-empty 'components' list")
    comps = []
    for i, c in enumerate(block["components"]):
        if not isinstance(c, dict) or set(c) - {"weight", "L"} or "L" not in c:
            raise ConfigError(f"{where}.components[{i}]: expected {{weight, L}}")
        L = parse_number(c["L"], f"{where}.components[{i}].L")
        if L <= 0:
            raise ConfigError(f"{where}.components[{i}].L must be positive")
        comps.append(KernelComponent(parse_number(c.get("weight", 1.0), f"{where}.weight"), L))
    K = _int(block.get("truncation_K", 10), f"{where}.truncation_K", 1)
    try:
        return KernelSpec(tuple(comps), dim, K)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _per_axis(value, dim, where):
    vals = value if isinstance(value, list) else [value] * dim
    if len(vals) != dim:
        raise ConfigError(f"{where}: expected {dim} values")
    return [parse_number(v, where) for v in vals]


def build_target(cfg: dict) -> TargetSpec:
    g = cfg["grid"]
    dim = _int(g["dim"], "grid.dim")
    if dim not in (1, 2):
        raise ConfigError("grid.dim must be 1 or 2")
    n = _int(g["n"], "grid.n", 4)
    grid = PeriodicGrid(n, dim)
    t = cfg["target"]
    M_F = parse_number(t["M_F"], "target.M_F")
    if not 0 < M_F < 1:
        raise ConfigError("target.M_F must lie in (0, 1)")
    family = _choice(t.get("family", "von_mises"), ("von_mises", "uniform"), "target.family")
    if family == "uniform":
        rho = uniform(grid, M_F)
    else:
        rho = von_mises(grid, _per_axis(t["kappa"], dim, "target.kappa"), _per_axis(t["mu"], dim, "target.mu"), M_F)
    D = parse_number(cfg["D"], "D")
    if D < 0:
        raise ConfigError("D must be nonnegative")
    return TargetSpec(rho, D, _kernel(cfg["kernel"], dim, "kernel"), M_F)


def _run_labels(cfg):
    runs = cfg["runs"]
    if runs is None:
        return {"main": {}}
    if not isinstance(runs, dict) or not runs:
        raise ConfigError("runs: expected a mapping of label -> control overrides")
    for label, ov in runs.items():
        if not isinstance(ov, dict) or set(ov) - set(BASE["control"]):
            raise ConfigError(f"runs.{label}: only control keys {list(BASE['control'])} may be overridden")
    return runs


def build_sim_configs(cfg: dict, target: TargetSpec | None = None) -> dict:
    """One :class:`SimConfig` per run label."""
    target = target or build_target(cfg)
    dim = target.grid.dim
    tm = cfg["time"]
    dt = parse_number(tm["dt"], "time.dt")
    if dt <= 0:
        raise ConfigError("time.dt must be positive")
    n_steps = _int(tm["n_steps"], "time.n_steps", 0)
    record_every = _int(tm["record_every"], "time.record_every", 1)
    plant = _kernel(cfg["plant_kernel"], dim, "plant_kernel") if cfg["plant_kernel"] else None
    dist = None
    if cfg["disturbance"]:
        d = cfg["disturbance"]
        if not isinstance(d, dict) or set(d) - {"amplitude", "onset_time", "onset_fraction"}:
            raise ConfigError("disturbance: expected {amplitude, onset_time | onset_fraction}")
        amp = d.get("amplitude", "pi/100")
        amp = tuple(_per_axis(amp, dim, "disturbance.amplitude")) if isinstance(amp, list) else \
            parse_number(amp, "disturbance.amplitude")
        if "onset_time" in d:
            onset = parse_number(d["onset_time"], "disturbance.onset_time")
        else:
            onset = parse_number(d.get("onset_fraction", 0.5), "disturbance.onset_fraction") * n_steps * dt
        dist = Disturbance(amp, onset)
    out = {}
    for label, ov in _run_labels(cfg).items():
        ctl = dict(cfg["control"], **ov)
        K_L = parse_number(ctl["K_L"], "control.K_L")
        if K_L <= 0:
            raise ConfigError("control.K_L must be positive")
        out[label] = SimConfig(
            target=target, dt=dt, n_steps=n_steps, K_L=K_L,
            scheme=_choice(ctl["scheme"], ("feed_forward", "reference_governor"), "control.scheme"),
            alpha_rule=_choice(ctl["alpha_rule"], ("off", "conservative", "optimal"), "control.alpha_rule"),
            epsilon=parse_number(ctl["epsilon"], "control.epsilon"), plant_kernel=plant, disturbance=dist,
            record_every=record_every, allow_infeasible=bool(cfg["allow_infeasible"]),
        )
    return out


@dataclass
class Scenario:
    name: str
    kind: str
    config: dict

    @classmethod
    def from_source(cls, source: str, overrides=(), seed=None, steps=None) -> "Scenario":
        cfg = load_config(source)
        for ov in overrides:
            cfg = apply_override(cfg, ov)
        if seed is not None:
            cfg = _merge(cfg, {"agents": {"seed": seed}})
        if steps is not None:
            cfg = _merge(cfg, {"time": {"n_steps": steps}})
        kind = _choice(cfg["kind"], KINDS, "kind")
        sc = cls(str(cfg["name"]), kind, cfg)
        sc.validate()
        return sc

    def validate(self):
        """Build every object the run needs so config errors surface before any output."""
        if self.kind == "feasibility_sweep":
            self._panels()
            return
        target = build_target(self.config)
        sims = build_sim_configs(self.config, target)
        if self.kind == "agents":
            if target.grid.dim != 1:
                raise ConfigError("agent scenarios are one-dimensional")
            self._agent_params(target)
        return sims

    def _agent_params(self, target):
        a = self.config["agents"]
        total = _int(a["N_total"], "agents.N_total", 4)
        values = a["N_L_values"] if a["N_L_values"] is not None else [a["N_L"]]
        N_Ls = [_int(v, "agents.N_L", 2) for v in values]
        for N_L in N_Ls:
            if not 2 <= N_L <= total - 2:
                raise ConfigError(f"agents.N_L={N_L} leaves fewer than 2 agents of a kind")
        bw = a["bandwidth"]
        return dict(
            total=total, N_Ls=N_Ls, n_trials=_int(a["n_trials"], "agents.n_trials", 1),
            seed=_int(a["seed"], "agents.seed", 0), update_every=_int(a["update_every"], "agents.update_every", 1),
            kde=KdeConfig(None if bw is None else parse_number(bw, "agents.bandwidth")),
            workers=_int(a["workers"], "agents.workers", 1),
        )

    def _panels(self):
        sw = self.config["sweep"]
        n = _int(sw["n"], "sweep.n", 8)
        panels = []
        if not sw["panels"]:
            raise ConfigError("sweep.panels: at least one panel is required")
        for i, p in enumerate(sw["panels"]):
            where = f"sweep.panels[{i}]"
            if not isinstance(p, dict):
                raise ConfigError(f"{where}: expected a mapping")
            vals = []
            for k in ("values1", "values2"):
                v = p.get(k)
                if not isinstance(v, list) or len(v) != 3:
                    raise ConfigError(f"{where}.{k}: expected [start, stop, count]")
                vals.append(np.linspace(parse_number(v[0], k), parse_number(v[1], k), _int(v[2], k, 1)))
            fixed = {k: parse_number(v, f"{where}.fixed.{k}") for k, v in (p.get("fixed") or {}).items()}
            for k in [p.get("param1"), p.get("param2"), *fixed]:
                _choice(k, ("D", "kappa", "L"), f"{where} parameter")
            panels.append((str(p.get("name", f"panel{i}")), p["param1"], vals[0], p["param2"], vals[1], fixed))
        return n, panels


# ---------------------------------------------------------------------------
# execution


def _fields_out(out, prefix, fields: dict, grid):
    for name, values in fields.items():
        write_field_csv(PeriodicField(grid, values), os.path.join(out, f"{prefix}_{name}.csv"))


def _json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _feasibility_summary(rep):
    return dict(
        M_hat_L=rep.M_hat_L, M_L=rep.M_L, feasible=rep.feasible, constant=rep.constant,
        stability_margin=rep.stability_margin, g1_sup=rep.g1_sup, a1=rep.a1, a2=rep.a2,
        closed_form=rep.closed_form, min_rho_L_bar=float(rep.rho_L_bar.values.min()),
    )


def _run_pde(sc: Scenario, out: str, log):
    target = build_target(sc.config)
    sims = build_sim_configs(sc.config, target)
    rep = feasibility(target, check=False)
    any_cfg = next(iter(sims.values()))
    if not rep.feasible and not any_cfg.allow_infeasible:
        err = Infeasible if target.grid.dim == 1 else Infeasible2D
        raise err(f"target needs leader mass {rep.M_hat_L:.4g} but only {target.M_L:.4g} is available")
    records = {}
    for label, sim in sims.items():
        t0 = time.time()
        records[label] = run(sim)
        log(f"{sc.name}/{label}: {sim.n_steps} steps in {time.time() - t0:.1f}s")
    grid = target.grid
    summary = {"scenario": sc.name, "feasibility": _feasibility_summary(rep), "runs": {}}
    _json(os.path.join(out, "feasibility.json"), summary["feasibility"])
    _fields_out(out, "reference", {"rho_L_bar": rep.rho_L_bar.values, "rho_F_bar": target.rho_F_target.values}, grid)
    if grid.dim == 1 and rep.h is not None:
        _fields_out(out, "reference", {"h": rep.h.values}, grid)
    for label, rec in records.items():
        rec.write_csv(os.path.join(out, f"record_{label}.csv"))
        _fields_out(out, f"fields_{label}_t0", {"rho_L": rec.rho_L0.values, "rho_F": rec.rho_F0.values}, grid)
        _fields_out(out, f"fields_{label}_tf", {"rho_L": rec.rho_L.values, "rho_F": rec.rho_F.values,
                                                "rho_hat_L": rec.rho_hat_L.values}, grid)
        plots.line_chart(os.path.join(out, f"error_{label}.svg"), rec.times,
                         {"E_L": rec.E_L, "E_F": rec.E_F}, title=f"{sc.name} {label}: percentage error",
                         ylabel="%")
        plots.line_chart(os.path.join(out, f"kl_{label}.svg"), rec.times,
                         {"KL_L": rec.KL_L, "KL_F": rec.KL_F}, title=f"{sc.name} {label}: KL divergence",
                         log_y=True)
        plots.line_chart(os.path.join(out, f"alpha_{label}.svg"), rec.times, {"alpha": rec.alpha},
                         title=f"{sc.name} {label}: alpha")
        if grid.dim == 2:
            plots.heatmap(os.path.join(out, f"heatmap_{label}_rho_F.svg"), rec.rho_F.values, "final follower density")
            plots.heatmap(os.path.join(out, f"heatmap_{label}_rho_L.svg"), rec.rho_L.values, "final leader density")
        h = rec.header
        summary["runs"][label] = dict(
            final_E_F=float(rec.E_F[-1]), steady_E_F=rec.steady("E_F"), final_KL_F=float(rec.KL_F[-1]),
            final_alpha=float(rec.alpha[-1]), max_mass_drift=rec.max_mass_drift,
            max_lyap_residual=h["max_lyap_residual"], stability_gate=h["stability_gate"],
            g1_sup=h["g1_sup"], vacuum_steps=h["vacuum_steps"],
        )
    if len(records) > 1:
        first = next(iter(records.values()))
        plots.line_chart(os.path.join(out, "error_all.svg"), first.times,
                         {k: r.E_F for k, r in records.items()}, title=f"{sc.name}: follower error", ylabel="%")
    _json(os.path.join(out, "summary.json"), summary)
    return summary


def _run_agents(sc: Scenario, out: str, log):
    target_cfg = copy.deepcopy(sc.config)
    base = build_target(sc.config)
    p = sc._agent_params(base)
    ensembles = []
    summary = {"scenario": sc.name, "ensembles": []}
    for N_L in p["N_Ls"]:
        N_F = p["total"] - N_L
        target_cfg["target"]["M_F"] = N_F / p["total"]
        target = build_target(target_cfg)
        sim = build_sim_configs(target_cfg, target)
        sim = next(iter(sim.values()))
        t0 = time.time()
        ens = run_discrete(sim, N_L, N_F, p["kde"], p["n_trials"], p["seed"],
                           update_every=p["update_every"], workers=p["workers"])
        log(f"{sc.name}: N_L={N_L}, {p['n_trials']} trials in {time.time() - t0:.1f}s")
        ensembles.append(ens)
        summary["ensembles"].append(ens.summary())
        tr = ens.trials[0]
        with open(os.path.join(out, f"trial_NL{N_L}_0.csv"), "w") as fh:
            fh.write("t,E_F,KL_F,alpha,mass_L,mass_F\n")
            for row in zip(tr.times, tr.E_F, tr.KL_F, tr.alpha, tr.mass_L, tr.mass_F):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        plots.line_chart(os.path.join(out, f"error_NL{N_L}.svg"), tr.times,
                         {f"trial {t.trial}": t.E_F for t in ens.trials}, title=f"N_L={N_L}: follower error",
                         ylabel="%")
    with open(os.path.join(out, "ensemble.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "seed", "N_L", "steady_E_F", "steady_KL_F"])
        for ens in ensembles:
            for t in ens.trials:
                w.writerow([t.trial, t.seed, t.N_L, repr(t.steady_E_F), repr(t.steady_KL_F)])
    write_aggregate_csv(ensembles, os.path.join(out, "aggregate.csv"))
    _json(os.path.join(out, "summary.json"), summary)
    return summary


def _run_sweep(sc: Scenario, out: str, log):
    n, panels = sc._panels()
    summary = {"scenario": sc.name, "panels": {}}
    for name, p1, v1, p2, v2, fixed in panels:
        rows = feasibility_sweep(p1, v1, p2, v2, base=fixed, n=n)
        with open(os.path.join(out, f"feasibility_{name}.csv"), "w") as fh:
            fh.write("param1,param2,M_hat_L,feasible\n")
            for a, b, m, f in rows:
                fh.write(f"{a!r},{b!r},{m!r},{str(f).lower()}\n")
        grid = np.array([r[2] for r in rows]).reshape(len(v1), len(v2))
        plots.heatmap(os.path.join(out, f"feasibility_{name}.svg"), grid,
                      f"min leader mass: {p1} (right) vs {p2} (up)")
        summary["panels"][name] = dict(param1=p1, param2=p2, fixed=fixed, points=len(rows),
                                       feasible_points=int(sum(r[3] for r in rows)))
        log(f"{sc.name}/{name}: {len(rows)} points")
    _json(os.path.join(out, "summary.json"), summary)
    return summary


RUNNERS = {"pde": _run_pde, "agents": _run_agents, "feasibility_sweep": _run_sweep}


def run_scenario(sc: Scenario, out_dir: str, log=lambda msg: None) -> dict:
    """Run a validated scenario and move its artifacts into ``out_dir``.

    Artifacts are written to a scratch directory first, so a failed run
    leaves nothing behind.
    """
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    scratch = tempfile.mkdtemp(prefix=".densityherd-", dir=parent)
    try:
        with open(os.path.join(scratch, "config.yaml"), "w") as fh:
            yaml.safe_dump(sc.config, fh, sort_keys=True)
        summary = RUNNERS[sc.kind](sc, scratch, log)
        os.makedirs(out_dir, exist_ok=True)
        for f in sorted(os.listdir(scratch)):
            os.replace(os.path.join(scratch, f), os.path.join(out_dir, f))
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    summary["out_dir"] = os.path.abspath(out_dir)
    return summary
