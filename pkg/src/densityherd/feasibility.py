"""Feasibility of a desired follower density and synthesis of the leader reference.

A follower density ``rho_F`` is a steady state when the leaders induce the
velocity ``v = D grad(rho_F) / rho_F``, which exactly balances diffusion.
The leader density producing ``v`` is found by deconvolution and is defined
up to an additive constant; the target is feasible when that constant can be
chosen so the leader density is nonnegative with the available leader mass.

For the single repulsive kernel in 1D the answer is explicit:

    h(x) = -pi D g1 + (pi D / L^2) g2 - D C / (2 L^2)

with ``g2 = log(rho_F / M_F)``, ``g1 = g2''`` and ``C = int g2``.  The minimum
leader mass is ``max h``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .deconvolve import deconvolve_1d, deconvolve_2d
from .errors import Infeasible, Infeasible2D, NonPositiveTarget
from .grid import PeriodicField, PeriodicGrid, diff1, diff2, integrate, periodic_max
from .kernel import KernelSpec

NEGATIVITY_TOL = 1e-10
MASS_TOL = 1e-8
LOG_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """Desired follower density together with the plant parameters it is judged against."""

    rho_F_target: PeriodicField
    D: float
    kernel: KernelSpec
    M_F: float | None = None

    def __post_init__(self):
        mass = float(integrate(self.rho_F_target))
        if self.M_F is None:
            object.__setattr__(self, "M_F", mass)
        elif abs(mass - self.M_F) > MASS_TOL:
            raise ValueError(f"target integrates to {mass:.10g}, expected M_F = {self.M_F}")
        if not 0 < self.M_F < 1:
            raise ValueError(f"follower mass must lie in (0, 1), got {self.M_F}")
        if self.D < 0:
            raise ValueError("diffusivity must be nonnegative")
        if self.kernel.dim != self.grid.dim:
            raise ValueError("kernel and target have different dimensions")
        if self.rho_F_target.values.min() <= 0:
            raise NonPositiveTarget(
                f"target density must be strictly positive (min {self.rho_F_target.values.min():.3e})"
            )

    @property
    def grid(self) -> PeriodicGrid:
        return self.rho_F_target.grid

    @property
    def M_L(self) -> float:
        return 1.0 - self.M_F


def von_mises(grid: PeriodicGrid, kappa, mu=0.0, mass: float = 1.0) -> PeriodicField:
    """(Product) von Mises density of the given mass; ``kappa``/``mu`` are per-axis in 2D."""
    kappa = np.broadcast_to(np.asarray(kappa, float), (grid.dim,))
    mu = np.broadcast_to(np.asarray(mu, float), (grid.dim,))
    log_rho = sum(k * np.cos(x - m) for k, m, x in zip(kappa, mu, grid.mesh()))
    norm = np.prod([2 * np.pi * np.i0(k) for k in kappa])
    return PeriodicField(grid, mass * np.exp(log_rho) / norm, "density")


def uniform(grid: PeriodicGrid, mass: float = 1.0) -> PeriodicField:
    return PeriodicField(grid, np.full(grid.shape, mass / grid.volume), "density")


def von_mises_target(grid, kappa, mu=0.0, M_F=0.6, D=0.05, L=np.pi) -> TargetSpec:
    return TargetSpec(von_mises(grid, kappa, mu, M_F), D, KernelSpec.repulsive(L, grid.dim), M_F)


@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    M_hat_L: float
    M_L: float
    feasible: bool
    v_FL_bar: PeriodicField
    rho_L_bar: PeriodicField
    constant: float  # B in 1D, A = a1 + a2 in 2D
    g1: PeriodicField | None = None
    g2: PeriodicField | None = None
    C: float | None = None
    h: PeriodicField | None = None
    a1: float | None = None
    a2: float | None = None
    closed_form: bool = True
    g1_sup: float | None = None

    @property
    def stability_margin(self) -> float:
        """``2 - sup|g1|``; the follower error bound contracts when positive."""
        if self.g1_sup is None:
            return float("nan")
        return 2.0 - self.g1_sup


def desired_velocity(target: TargetSpec) -> PeriodicField:
    """Follower velocity that holds ``rho_F_target`` stationary: ``D grad(rho)/rho``."""
    rho = target.rho_F_target.values
    if rho.min() <= 0:
        raise NonPositiveTarget("target density must be strictly positive")
    grid = target.grid
    if grid.dim == 1:
        return PeriodicField(grid, target.D * diff1(rho, grid.dx) / rho, "velocity")
    v = np.stack([target.D * diff1(rho, grid.dx, a) / rho for a in range(grid.dim)])
    return PeriodicField(grid, v, "velocity")


def curvature_sup(g2: np.ndarray) -> float:
    """Sup norm of ``g2''`` from the spectral derivative, located off-grid.

    Grid maxima of a finite-difference second derivative miss the true sup
    by O(dx^2) twice over (truncation and the peak falling between nodes).
    """
    n = g2.shape[-1]
    c = np.fft.rfft(g2)
    k = np.arange(c.size)
    c = -(k**2) * c
    if n % 2 == 0:
        c[-1] = 0.0
    curv = np.fft.irfft(c, n)
    return max(periodic_max(curv), periodic_max(-curv))


def _log_profiles(target: TargetSpec):
    grid = target.grid
    g2 = np.log(np.maximum(target.rho_F_target.values / target.M_F, LOG_FLOOR))
    g1 = diff2(g2, grid.dx)
    return g1, g2, float(g2.sum() * grid.dx)


def feasibility_1d(target: TargetSpec) -> FeasibilityReport:
    """Minimum leader mass and steady leader reference for a 1D target.

    Single unit-weight repulsive kernels use the explicit ``h`` profile;
    any other kernel goes through numerical deconvolution of the desired
    velocity (``M_hat_L = -2 pi min H`` for the zero-mean solution ``H``).
    """
    grid = target.grid
    if grid.dim != 1:
        raise ValueError("feasibility_1d needs a 1D target")
    g1, g2, C = _log_profiles(target)
    v = desired_velocity(target)
    D, M_L = target.D, target.M_L
    fields = dict(g1=PeriodicField(grid, g1), g2=PeriodicField(grid, g2), C=C, g1_sup=curvature_sup(g2))
    if target.kernel.is_single_repulsive:
        L = target.kernel.L
        h = -np.pi * D * g1 + np.pi * D / L**2 * g2 - D * C / (2 * L**2)
        M_hat = periodic_max(h)
        B = (M_L + D * C / (2 * L**2)) / (2 * np.pi)
        rho_L = 0.5 * D * g1 - 0.5 * D / L**2 * g2 + B
        extra = dict(h=PeriodicField(grid, h), closed_form=True)
    else:
        H = deconvolve_1d(v, target.kernel, method="spectral").values
        M_hat = grid.volume * periodic_max(-H)
        B = M_L / grid.volume
        rho_L = H + B
        extra = dict(closed_form=False)
    feasible = M_hat <= M_L + grid.volume * NEGATIVITY_TOL and M_L < 1
    return FeasibilityReport(
        M_hat_L=M_hat, M_L=M_L, feasible=bool(feasible), v_FL_bar=v,
        rho_L_bar=PeriodicField(grid, rho_L), constant=B, **fields, **extra,
    )


def _as_density(values, grid, M_L, error):
    low = values.min()
    if low < -NEGATIVITY_TOL:
        raise error(f"leader reference dips to {low:.3e}; more leader mass is needed")
    return PeriodicField(grid, np.maximum(values, 0.0), "density")


def reference_leader_density_1d(target: TargetSpec) -> PeriodicField:
    """Nonnegative leader density of mass ``M_L`` that holds the target stationary."""
    rep = feasibility_1d(target)
    return _as_density(rep.rho_L_bar.values, target.grid, target.M_L, Infeasible)


def feasibility_2d(target: TargetSpec, check: bool = True) -> FeasibilityReport:
    """Deconvolve the desired 2D velocity and place the free constant.

    ``a1`` lifts the zero-mean solution to be nonnegative, ``a2`` spreads the
    remaining leader mass uniformly; the target is feasible when ``a2 >= 0``.
    With ``check`` an infeasible target raises :class:`Infeasible2D`.
    """
    grid = target.grid
    if grid.dim != 2:
        raise ValueError("feasibility_2d needs a 2D target")
    v = desired_velocity(target)
    H = deconvolve_2d(v, target.kernel).values
    a1 = float(-H.min())
    a2 = float((target.M_L - (H + a1).sum() * grid.cell_volume) / grid.volume)
    feasible = a2 >= -NEGATIVITY_TOL
    if check and not feasible:
        raise Infeasible2D(
            f"leader mass {target.M_L:.4g} is below the required {a1 * grid.volume:.4g}"
        )
    g1, g2, C = _log_profiles(target)
    lap_g2 = sum(diff2(g2, grid.dx, a) for a in range(2))
    return FeasibilityReport(
        M_hat_L=a1 * grid.volume, M_L=target.M_L, feasible=bool(feasible), v_FL_bar=v,
        rho_L_bar=PeriodicField(grid, H + a1 + a2), constant=a1 + a2,
        g1=PeriodicField(grid, lap_g2), g2=PeriodicField(grid, g2), C=C,
        a1=a1, a2=a2, closed_form=False, g1_sup=float(np.abs(lap_g2).max()),
    )


def reference_leader_density_2d(target: TargetSpec) -> PeriodicField:
    rep = feasibility_2d(target)
    return _as_density(rep.rho_L_bar.values, target.grid, target.M_L, Infeasible2D)


def feasibility(target: TargetSpec, check: bool = True) -> FeasibilityReport:
    if target.grid.dim == 1:
        return feasibility_1d(target)
    return feasibility_2d(target, check=check)


def reference_leader_density(target: TargetSpec) -> PeriodicField:
    if target.grid.dim == 1:
        return reference_leader_density_1d(target)
    return reference_leader_density_2d(target)


SWEEP_PARAMS = ("D", "kappa", "L")


def feasibility_sweep(param1, values1, param2, values2, base=None, n=500):
    """Minimum leader mass of 1D von Mises targets over a 2-parameter grid.

    ``base`` supplies the fixed parameters (defaults D=0.05, kappa=1.8,
    L=pi).  Returns rows ``(p1, p2, M_hat_L, feasible)`` with ``M_hat_L``
    saturated at 1 and ``feasible`` true when some leader mass below 1
    suffices.
    """
    for p in (param1, param2):
        if p not in SWEEP_PARAMS:
            raise ValueError(f"cannot sweep {p!r}; choose from {SWEEP_PARAMS}")
    params = dict(D=0.05, kappa=1.8, L=np.pi)
    params.update(base or {})
    grid = PeriodicGrid(n)
    rows = []
    for a, b in itertools.product(values1, values2):
        p = dict(params, **{param1: a, param2: b})
        # the follower mass only scales rho_F and cancels in log(rho_F / M_F)
        target = von_mises_target(grid, p["kappa"], 0.0, 0.5, p["D"], p["L"])
        M_hat = feasibility_1d(target).M_hat_L
        rows.append((float(a), float(b), min(M_hat, 1.0), bool(M_hat < 1.0)))
    return rows
