"""Leader velocity from the flux law ``div(rho_L u) = rhs``.

The right-hand side is chosen so the leader error obeys ``e_t = -K_L e``
pointwise.  In 1D the flux is the antiderivative of ``rhs``; in 2D it is the
curl-free solution of a Poisson problem.  ``u`` is the flux divided by the
leader density, floored where leaders are (nearly) absent.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MassMismatch, NonZeroMeanInput, VacuumRegion
from .grid import PeriodicField, PeriodicGrid, cumulative_midpoint, integrate

MASS_TOL = 1e-6
FLOOR_FACTOR = 1e-6


@dataclass(frozen=True)
class LeaderControlConfig:
    K_L: float = 1.0
    floor: float | None = None  # defaults to 1e-6 * mean leader density

    def __post_init__(self):
        if not self.K_L > 0:
            raise ValueError("K_L must be positive")


def default_floor(mass_L: float, grid: PeriodicGrid) -> float:
    return FLOOR_FACTOR * mass_L / grid.volume


def flux_rhs_array(rho_L, reference, reference_dt, K_L):
    """``-ref_t - K_L (ref - rho_L)`` projected onto zero mean."""
    rhs = rho_L - reference
    rhs *= K_L
    if reference_dt is not None:
        rhs -= reference_dt
    rhs -= rhs.mean()
    return rhs


def leader_flux_rhs(rho_L: PeriodicField, reference: PeriodicField, reference_dt=None, K_L: float = 1.0):
    """Divergence the leader flux must have for exponential error decay.

    Regulation (``reference_dt`` None) gives ``-K_L (reference - rho_L)``;
    tracking adds ``-reference_dt``.  The result is projected onto zero mean
    so its antiderivative closes on the circle.
    """
    m_ref, m_L = integrate(reference), integrate(rho_L)
    if abs(m_ref - m_L) > MASS_TOL:
        raise MassMismatch(f"reference mass {m_ref:.10g} differs from leader mass {m_L:.10g}")
    dt_vals = None
    if reference_dt is not None:
        dt_vals = reference_dt.values if isinstance(reference_dt, PeriodicField) else np.asarray(reference_dt)
    rhs = flux_rhs_array(rho_L.values.copy(), reference.values, dt_vals, K_L)
    return PeriodicField(rho_L.grid, rhs)


def _check_rhs(rhs, grid):
    total = rhs.sum() * grid.cell_volume
    if abs(total) > 1e-8 * max(1.0, np.sqrt((rhs * rhs).sum() * grid.cell_volume)):
        raise NonZeroMeanInput(f"flux divergence integrates to {total:.3e}, not zero")


def _floor_and_warn(rho, floor, grid):
    if floor is None:
        floor = default_floor(rho.sum() * grid.cell_volume, grid)
    low = rho < floor
    if low.any():
        warnings.warn(
            f"leader density below {floor:.3e} on {int(low.sum())} cells; velocity clamped",
            VacuumRegion,
            stacklevel=3,
        )
    return np.maximum(rho, floor)


def recover_u_1d(rho_L: PeriodicField, flux_rhs: PeriodicField, floor: float | None = None) -> PeriodicField:
    """``u = F / max(rho_L, floor)`` with ``F`` the first-cell-anchored antiderivative of ``flux_rhs``."""
    grid = rho_L.grid
    _check_rhs(flux_rhs.values, grid)
    F = cumulative_midpoint(flux_rhs.values, grid.dx)
    return PeriodicField(grid, F / _floor_and_warn(rho_L.values, floor, grid), "velocity")


class PoissonFlux:
    """Curl-free flux with a prescribed central-difference divergence on a 2D grid.

    The Poisson solve uses the symbol ``sin(k dx)/dx`` of the central
    difference rather than ``k``, so the discrete divergence of the returned
    flux reproduces the right-hand side to round-off on every mode except
    those where the difference operator itself is blind (wavenumbers 0 or
    n/2 on both axes).
    """

    def __init__(self, grid: PeriodicGrid):
        self.grid = grid
        k = np.fft.fftfreq(grid.n, 1.0 / grid.n)
        s = np.sin(k * grid.dx) / grid.dx
        S1, S2 = np.meshgrid(s, s, indexing="ij")
        sym = S1**2 + S2**2
        blind = sym < 1e-12
        inv = np.where(blind, 0.0, 1.0 / np.where(blind, 1.0, sym))
        # w_hat = -i S psi_hat, psi_hat = rhs_hat / |S|^2
        self._m1 = -1j * S1 * inv
        self._m2 = -1j * S2 * inv

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        R = np.fft.fft2(rhs)
        return np.stack([np.fft.ifft2(self._m1 * R).real, np.fft.ifft2(self._m2 * R).real])


def recover_u_2d(rho_L: PeriodicField, flux_rhs: PeriodicField, floor: float | None = None) -> PeriodicField:
    """Vector leader velocity whose flux ``rho_L u`` is curl-free with divergence ``flux_rhs``."""
    grid = rho_L.grid
    _check_rhs(flux_rhs.values, grid)
    w = PoissonFlux(grid)(flux_rhs.values)
    return PeriodicField(grid, w / _floor_and_warn(rho_L.values, floor, grid), "velocity")


def recover_u(rho_L: PeriodicField, flux_rhs: PeriodicField, floor: float | None = None) -> PeriodicField:
    if rho_L.grid.dim == 1:
        return recover_u_1d(rho_L, flux_rhs, floor)
    return recover_u_2d(rho_L, flux_rhs, floor)
