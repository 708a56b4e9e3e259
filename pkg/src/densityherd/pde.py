"""Closed-loop integration of the leader and follower continuity equations.

Followers:  rho_F_t + div(rho_F v) = D lap(rho_F),  v = f_plant * rho_L + d(t)
Leaders:    rho_L_t + div(rho_L u) = 0

Space is discretised with central differences in flux form (so both masses
are conserved to round-off) and time with forward Euler.  The controller
works with its own kernel model, which may differ from the plant's.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .control import PoissonFlux, default_floor, flux_rhs_array
from .errors import Infeasible, Infeasible2D, MassMismatch, NumericalBlowup, StabilityWarning
from .feasibility import TargetSpec, feasibility
from .governor import ALPHA_RULES, DEFAULT_EPSILON, Governor
from .grid import PeriodicField, PeriodicGrid, cumulative_midpoint, diff1, diff2, laplacian_array
from .kernel import KernelSpec, convolve_table
from .metrics import kl_array, percentage_error

SCHEMES = ("feed_forward", "reference_governor")
MASS_TOL = 1e-8
LYAPUNOV_RTOL = 1e-3
RECORD_COLUMNS = ("t", "E_L", "E_F", "KL_L", "KL_F", "alpha", "mass_L", "mass_F", "lyap_residual")


@dataclass(frozen=True)
class Disturbance:
    """Constant drift added to the follower velocity from ``onset_time`` on.

    In 2D ``amplitude`` may be a pair; a scalar acts along x1.
    """

    amplitude: float | tuple = math.pi / 100
    onset_time: float = 0.0

    def vector(self, dim):
        a = np.atleast_1d(np.asarray(self.amplitude, dtype=float))
        if dim == 1:
            return float(a[0])
        return np.pad(a, (0, dim - a.size))[:, None, None]


@dataclass(frozen=True, eq=False)
class SimConfig:
    target: TargetSpec
    dt: float = 1e-3
    n_steps: int = 150_000
    K_L: float = 1.0
    scheme: str = "feed_forward"
    alpha_rule: str = "conservative"
    epsilon: float = DEFAULT_EPSILON
    plant_kernel: KernelSpec | None = None
    disturbance: Disturbance | None = None
    rho_L0: PeriodicField | None = None
    rho_F0: PeriodicField | None = None
    record_every: int = 100
    allow_infeasible: bool = False
    floor: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0 or self.record_every < 1:
            raise ValueError("n_steps must be >= 0 and record_every >= 1")
        if not self.K_L > 0:
            raise ValueError("K_L must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.alpha_rule not in ALPHA_RULES:
            raise ValueError(f"alpha_rule must be one of {ALPHA_RULES}, got {self.alpha_rule!r}")
        if self.plant_kernel is None:
            object.__setattr__(self, "plant_kernel", self.target.kernel)
        for name, mass in (("rho_L0", self.target.M_L), ("rho_F0", self.target.M_F)):
            f = getattr(self, name)
            if f is None:
                g = self.grid
                object.__setattr__(self, name, PeriodicField(g, np.full(g.shape, mass / g.volume), "density"))
            elif f.grid != self.grid:
                raise ValueError(f"{name} lives on a different grid")
            elif abs(f.values.sum() * self.grid.cell_volume - mass) > MASS_TOL:
                raise MassMismatch(f"{name} does not carry mass {mass}")

    @property
    def grid(self) -> PeriodicGrid:
        return self.target.grid

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def D(self) -> float:
        return self.target.D

    @property
    def controller_kernel(self) -> KernelSpec:
        return self.target.kernel

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass(eq=False)
class SimRecord:
    """Recorded series of one run.

    ``E_L``/``E_F`` are percentages of the largest squared error of the run;
    ``lyap_residual`` is the Lyapunov-bound residual divided by the size of
    the bound's terms (nonpositive up to ``1e-3`` when the bound holds).
    """

    times: np.ndarray
    sq_err_L: np.ndarray
    sq_err_F: np.ndarray
    KL_L: np.ndarray
    KL_F: np.ndarray
    alpha: np.ndarray
    mass_L: np.ndarray
    mass_F: np.ndarray
    lyap_residual: np.ndarray
    rho_L0: PeriodicField
    rho_F0: PeriodicField
    rho_L: PeriodicField
    rho_F: PeriodicField
    rho_hat_L: PeriodicField
    header: dict = field(default_factory=dict)
    completed: bool = True

    @property
    def E_L(self) -> np.ndarray:
        return percentage_error(self.sq_err_L)

    @property
    def E_F(self) -> np.ndarray:
        return percentage_error(self.sq_err_F)

    @property
    def max_mass_drift(self) -> float:
        return float(max(np.ptp(self.mass_L), np.ptp(self.mass_F)))

    def steady(self, series: str = "E_F", fraction: float = 0.1) -> float:
        """Mean of a series over the last ``fraction`` of the record."""
        s = np.asarray(getattr(self, series))
        k = max(1, int(round(len(s) * fraction)))
        return float(s[-k:].mean())

    def rows(self):
        cols = [self.times, self.E_L, self.E_F, self.KL_L, self.KL_F, self.alpha,
                self.mass_L, self.mass_F, self.lyap_residual]
        return zip(*cols)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_COLUMNS)
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# single steps on fields


def _divergence(q, dx, dim):
    if dim == 1:
        return diff1(q, dx)
    return diff1(q[0], dx, 0) + diff1(q[1], dx, 1)


def step_followers(rho_F: PeriodicField, rho_L: PeriodicField, plant_kernel: KernelSpec, D: float, dt: float,
                   disturbance_velocity=0.0) -> PeriodicField:
    """One forward-Euler step of the follower advection-diffusion equation."""
    if rho_F.grid != rho_L.grid:
        raise ValueError("leader and follower densities live on different grids")
    g = rho_F.grid
    v = convolve_table(plant_kernel, rho_L.values, g) + disturbance_velocity
    rF = rho_F.values
    new = rF + dt * (D * laplacian_array(rF, g.dx) - _divergence(rF * v, g.dx, g.dim))
    if not np.isfinite(new).all():
        raise NumericalBlowup("follower density became non-finite")
    return PeriodicField(g, new)


def step_leaders(rho_L: PeriodicField, u: PeriodicField, dt: float) -> PeriodicField:
    """One forward-Euler step of the leader continuity equation.

    The flux uses ``max(rho_L, 0) u`` so that round-off undershoots of the
    central scheme below zero cannot feed back through the velocity.
    """
    g = rho_L.grid
    q = np.maximum(rho_L.values, 0.0) * u.values
    new = rho_L.values - dt * _divergence(q, g.dx, g.dim)
    if not np.isfinite(new).all():
        raise NumericalBlowup("leader density became non-finite")
    return PeriodicField(g, new)


# ---------------------------------------------------------------------------
# Lyapunov bound


@dataclass(frozen=True)
class LyapunovBound:
    """``d/dt |e_F|^2 <= -beta eta + gamma e^{-K t} eta + delta e^{-K t} sqrt(eta)``."""

    beta: float
    gamma: float
    delta: float
    K: float
    g1_sup: float

    @property
    def hypotheses_hold(self) -> bool:
        return self.g1_sup < 2.0

    def terms(self, eta, t):
        decay = math.exp(-self.K * t)
        return -self.beta * eta, self.gamma * decay * eta, self.delta * decay * math.sqrt(max(eta, 0.0))

    def scaled_residual(self, eta0, eta1, t, dt) -> float:
        a, b, c = self.terms(eta0, t)
        residual = (eta1 - eta0) / dt - (a + b + c)
        scale = max(abs(a), b, c)
        if scale == 0.0:
            return 0.0 if residual <= 0.0 else math.inf
        return residual / scale


def lyapunov_bound(target: TargetSpec, kernel: KernelSpec, rho_L0: np.ndarray, K_L: float, g1_sup: float):
    """Constants of the follower-error bound for a given initial leader density."""
    g = target.grid
    bar = target.rho_F_target.values
    D = target.D
    c = convolve_table(kernel, rho_L0, g)
    if g.dim == 1:
        h1 = diff1(c, g.dx)
        h2 = diff1(bar * c - D * diff1(bar, g.dx), g.dx)
    else:
        grad = np.stack([diff1(bar, g.dx, a) for a in range(2)])
        h1 = _divergence(c, g.dx, 2)
        h2 = _divergence(bar * c - D * grad, g.dx, 2)
    return LyapunovBound(
        beta=2 * D - D * g1_sup,
        gamma=float(np.abs(h1).max()),
        delta=float(2 * np.sqrt((h2 * h2).sum() * g.cell_volume)),
        K=K_L,
        g1_sup=g1_sup,
    )


# ---------------------------------------------------------------------------
# closed loop


def _check_cfl(v_max, u_max, D, dt, dx, where):
    adv = max(v_max, u_max) * dt / dx
    diff = D * dt / dx**2
    if adv > 1 or diff > 0.5:
        warnings.warn(
            f"{where}: advective number {adv:.3g} (limit 1), diffusive number {diff:.3g} (limit 0.5)",
            StabilityWarning,
            stacklevel=3,
        )
        return True
    return False


def run(config: SimConfig) -> SimRecord:
    """Integrate the closed loop and record every ``record_every`` steps.

    Raises :class:`NumericalBlowup` (carrying the partial record as
    ``.record``) if either density stops being finite.
    """
    cfg = config
    g = cfg.grid
    dim, dx, dt, D, K_L = g.dim, g.dx, cfg.dt, cfg.D, cfg.K_L
    cv = g.cell_volume
    target = cfg.target

    report = feasibility(target, check=False)
    if not report.feasible and not cfg.allow_infeasible:
        err = Infeasible if dim == 1 else Infeasible2D
        raise err(f"target needs leader mass {report.M_hat_L:.4g} > {target.M_L:.4g}")
    rho_L_bar = report.rho_L_bar.values
    if report.feasible:
        rho_L_bar = np.maximum(rho_L_bar, 0.0)
    bar_F = target.rho_F_target.values

    rule = cfg.alpha_rule if cfg.scheme == "reference_governor" else "off"
    gov = Governor(target, rho_L_bar, rule, dt, cfg.epsilon) if cfg.scheme == "reference_governor" else None
    floor = cfg.floor if cfg.floor is not None else default_floor(target.M_L, g)
    poisson = PoissonFlux(g) if dim == 2 else None
    plant = cfg.plant_kernel
    dist = cfg.disturbance
    dist_v = dist.vector(dim) if dist is not None else 0.0
    onset_step = math.ceil(dist.onset_time / dt - 1e-9) if dist is not None else None

    rL = cfg.rho_L0.values.copy()
    rF = cfg.rho_F0.values.copy()
    out = {k: [] for k in ("t", "eL", "eF", "klL", "klF", "alpha", "mL", "mF", "lyap")}
    bound = None
    header = dict(
        dim=dim, n=g.n, dt=dt, n_steps=cfg.n_steps, D=D, K_L=K_L, scheme=cfg.scheme, alpha_rule=rule,
        M_L=target.M_L, M_F=target.M_F, M_hat_L=report.M_hat_L, feasible=report.feasible,
        g1_sup=report.g1_sup, stability_gate=bool(report.g1_sup is not None and report.g1_sup < 2.0),
        plant_matches_model=plant == target.kernel, disturbed=dist is not None,
        vacuum_steps=0, cfl_warned=False, max_lyap_residual=-math.inf,
    )
    ref = rho_L_bar
    eta_prev = None
    lyap_last = 0.0

    def finish(completed):
        rec = SimRecord(
            times=np.array(out["t"]), sq_err_L=np.array(out["eL"]), sq_err_F=np.array(out["eF"]),
            KL_L=np.array(out["klL"]), KL_F=np.array(out["klF"]), alpha=np.array(out["alpha"]),
            mass_L=np.array(out["mL"]), mass_F=np.array(out["mF"]), lyap_residual=np.array(out["lyap"]),
            rho_L0=cfg.rho_L0, rho_F0=cfg.rho_F0, rho_L=PeriodicField(g, rL), rho_F=PeriodicField(g, rF),
            rho_hat_L=PeriodicField(g, ref), header=header, completed=completed,
        )
        return rec

    for step in range(cfg.n_steps + 1):
        t = step * dt
        if gov is not None:
            _, _, alpha, _, ref, ref_dt = gov.step_arrays(rF)
        else:
            alpha, ref, ref_dt = 0.0, rho_L_bar, None

        eF = bar_F - rF
        eta = float(np.vdot(eF, eF) * cv)
        if bound is None:
            # leader error decays from its value at the first step; the
            # bound sees the part of the initial leader density not in ref
            bound = lyapunov_bound(target, plant, rL - (ref - rho_L_bar), K_L, report.g1_sup or 0.0)
            header.update(lyap_beta=bound.beta, lyap_gamma=bound.gamma, lyap_delta=bound.delta)
        else:
            lyap_last = bound.scaled_residual(eta_prev, eta, t - dt, dt)
            if lyap_last > header["max_lyap_residual"]:
                header["max_lyap_residual"] = lyap_last
        eta_prev = eta

        if step % cfg.record_every == 0 or step == cfg.n_steps:
            eL = ref - rL
            out["t"].append(t)
            out["eL"].append(float(np.vdot(eL, eL) * cv))
            out["eF"].append(eta)
            out["klL"].append(kl_array(ref, rL, cv, warn=False))
            out["klF"].append(kl_array(bar_F, rF, cv, warn=False))
            out["alpha"].append(alpha)
            out["mL"].append(float(rL.sum() * cv))
            out["mF"].append(float(rF.sum() * cv))
            out["lyap"].append(lyap_last)
        if step == cfg.n_steps:
            break

        rhs = flux_rhs_array(rL.copy(), ref, ref_dt, K_L)
        q = cumulative_midpoint(rhs, dx) if dim == 1 else poisson(rhs)
        low = rL < floor
        if low.any():
            header["vacuum_steps"] += 1
            q = q * (np.maximum(rL, 0.0) / np.maximum(rL, floor))

        v = convolve_table(plant, rL, g)
        if dist is not None and step >= onset_step:
            v = v + dist_v
        if step % cfg.record_every == 0 and not header["cfl_warned"]:
            u_max = float(np.abs(q).max() / max(rL.max(), floor))
            header["cfl_warned"] = _check_cfl(float(np.abs(v).max()), u_max, D, dt, dx, f"t={t:g}")

        rF = rF + dt * (D * laplacian_array(rF, dx) - _divergence(rF * v, dx, dim))
        rL = rL - dt * _divergence(q, dx, dim)
        if not (math.isfinite(rF.sum()) and math.isfinite(rL.sum())):
            err = NumericalBlowup(f"densities became non-finite at t={t + dt:g}")
            err.record = finish(False)
            raise err
    return finish(True)
