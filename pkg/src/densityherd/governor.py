"""Reference governor: reshape the leader reference from the measured follower error.

The steady reference ``rho_L_bar`` only holds the target if the plant is
exactly as modelled.  The governor adds ``alpha * W`` where ``W`` is the
zero-mean deconvolution of the velocity correction

    w = D grad(rho_F_bar) e_F / (rho_F_bar rho_F),   e_F = rho_F_bar - rho_F

and ``alpha`` in [0, 1] is as large as allowed while keeping the reference
nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .deconvolve import _spectral_solve, ode_profile
from .errors import VanishingFollowerDensity
from .feasibility import TargetSpec
from .grid import PeriodicField, diff1

ALPHA_RULES = ("off", "conservative", "optimal")
DEFAULT_EPSILON = 0.01
FOLLOWER_FLOOR = 1e-8


def correction_array(rho_F, rho_F_bar, grad_bar, D):
    """``w`` on arrays; ``grad_bar`` has a leading component axis in 2D."""
    low = rho_F.min()
    if not low > FOLLOWER_FLOOR:
        raise VanishingFollowerDensity(f"follower density reaches {low:.3e}; the correction is undefined")
    return D * grad_bar * ((rho_F_bar - rho_F) / (rho_F_bar * rho_F))


def feedback_correction(rho_F: PeriodicField, target: TargetSpec) -> PeriodicField:
    """Velocity correction ``w`` (vector in 2D) for the current follower density."""
    bar = target.rho_F_target.values
    grid = target.grid
    if grid.dim == 1:
        grad = diff1(bar, grid.dx)
    else:
        grad = np.stack([diff1(bar, grid.dx, a) for a in range(grid.dim)])
    return PeriodicField(grid, correction_array(rho_F.values, bar, grad, target.D), "velocity")


def conservative_alpha(min_rho_L_bar: float, min_W: float) -> float:
    """Largest alpha that keeps ``min rho_L_bar + alpha min W`` nonnegative, clamped to [0, 1]."""
    if min_W >= 0:
        return 1.0
    with np.errstate(over="ignore"):  # tiny |min_W| saturates to 1 anyway
        return float(min(1.0, max(0.0, -min_rho_L_bar / min_W)))


def optimal_alpha(rho_L_bar: np.ndarray, W: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> float:
    """``min_x rho_L_bar / max(-W, epsilon)`` clamped to [0, 1].

    ``epsilon`` bounds the ratio where ``W`` is near zero.  Where ``-W``
    stays below ``epsilon`` that bound can undercut the conservative value,
    which is always admissible, so the result is never allowed below it.
    """
    ratio = np.min(rho_L_bar / np.maximum(-W, epsilon))
    ratio = max(ratio, conservative_alpha(float(np.min(rho_L_bar)), float(np.min(W))))
    return float(min(1.0, max(0.0, ratio)))


@dataclass(frozen=True, eq=False)
class GovernorState:
    w: PeriodicField
    W: PeriodicField
    alpha: float
    beta: float  # constant that made W zero-mean
    rho_hat_L: PeriodicField
    rho_hat_L_dt: PeriodicField
    alpha_rule: str


class Governor:
    """Stateful governor that also differentiates its output in time.

    Parameters
    ----------
    target : TargetSpec
    rho_L_bar : PeriodicField
        Steady leader reference for ``target``.
    alpha_rule : {"off", "conservative", "optimal"}
    dt : float
        Step used for the backward difference of the reference.
    epsilon : float
        Regularisation of the optimal rule.
    """

    def __init__(self, target, rho_L_bar, alpha_rule="conservative", dt=1e-3, epsilon=DEFAULT_EPSILON):
        if alpha_rule not in ALPHA_RULES:
            raise ValueError(f"alpha_rule must be one of {ALPHA_RULES}, got {alpha_rule!r}")
        self.target = target
        self.grid = target.grid
        self.alpha_rule = alpha_rule
        self.dt = dt
        self.epsilon = epsilon
        self.kernel = target.kernel
        self.rho_L_bar = np.asarray(rho_L_bar.values if isinstance(rho_L_bar, PeriodicField) else rho_L_bar)
        self._min_bar = float(self.rho_L_bar.min())
        bar = target.rho_F_target.values
        g = self.grid
        self._bar = bar
        if g.dim == 1:
            self._grad = diff1(bar, g.dx)
        else:
            self._grad = np.stack([diff1(bar, g.dx, a) for a in range(g.dim)])
        self._ode = g.dim == 1 and len(self.kernel.components) == 1
        self.previous = None

    def reset(self):
        self.previous = None

    def deconvolve_correction(self, w: np.ndarray):
        """Zero-mean ``W`` with ``f * W = w`` and the constant ``beta`` that fixed its mean.

        The kernel is odd, so it cannot produce a net drift; the mean of
        ``w`` is removed before inverting.
        """
        g = self.grid
        if self._ode:
            c = self.kernel.components[0]
            raw = ode_profile(w, c.L, g.dx) / c.weight
        elif g.dim == 1:
            raw, _ = _spectral_solve((w - w.mean())[None], self.kernel, g)
        else:
            raw, _ = _spectral_solve(w - w.mean(axis=(-2, -1), keepdims=True), self.kernel, g)
        beta = -float(raw.mean())
        return raw + beta, beta

    def step_arrays(self, rho_F: np.ndarray):
        """One governor update on raw arrays: returns ``(w, W, alpha, beta, rho_hat, rho_hat_dt)``."""
        if self.alpha_rule == "off":
            w = W = None
            alpha, beta = 0.0, 0.0
            rho_hat = self.rho_L_bar
        else:
            w = correction_array(rho_F, self._bar, self._grad, self.target.D)
            W, beta = self.deconvolve_correction(w)
            if self.alpha_rule == "conservative":
                alpha = conservative_alpha(self._min_bar, float(W.min()))
            else:
                alpha = optimal_alpha(self.rho_L_bar, W, self.epsilon)
            rho_hat = self.rho_L_bar + alpha * W
        if self.previous is None:
            rho_hat_dt = np.zeros_like(rho_hat)
        else:
            rho_hat_dt = (rho_hat - self.previous) / self.dt
        self.previous = rho_hat
        return w, W, alpha, beta, rho_hat, rho_hat_dt

    def step(self, rho_F: PeriodicField) -> GovernorState:
        w, W, alpha, beta, rho_hat, rho_hat_dt = self.step_arrays(rho_F.values)
        g = self.grid
        zero = np.zeros(g.shape if g.dim == 1 else (g.dim,) + g.shape)
        return GovernorState(
            w=PeriodicField(g, zero if w is None else w, "velocity"),
            W=PeriodicField(g, np.zeros(g.shape) if W is None else W),
            alpha=alpha,
            beta=beta,
            rho_hat_L=PeriodicField(g, rho_hat),
            rho_hat_L_dt=PeriodicField(g, rho_hat_dt),
            alpha_rule=self.alpha_rule,
        )


def governor_step(rho_F, target, rho_L_bar, alpha_rule="conservative", previous=None, dt=1e-3,
                  epsilon=DEFAULT_EPSILON) -> GovernorState:
    """Single stateless governor update; pass the previous ``rho_hat_L`` for the time derivative."""
    gov = Governor(target, rho_L_bar, alpha_rule, dt, epsilon)
    if previous is not None:
        gov.previous = previous.values if isinstance(previous, PeriodicField) else previous
    return gov.step(rho_F)
