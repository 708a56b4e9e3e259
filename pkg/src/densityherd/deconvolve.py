"""Recover a density from the velocity field it induces through a kernel.

In 1D, ``phi = f * rho`` for the repulsive exponential kernel of scale L
satisfies ``phi_xx - phi / L**2 = 2 rho_x``, so rho is half an antiderivative
of the left-hand side plus a constant.  The constant is not determined by
``phi``; callers choose it with ``mass=`` (fix the integral), ``constant=``
(explicit additive value) or neither (zero mean).

In 2D (and for multi-component 1D kernels) the inversion is done mode by
mode in Fourier space.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, IllConditionedMode, NonZeroMeanInput
from .grid import PeriodicField, cumulative_midpoint, diff2
from .kernel import KernelSpec, ill_conditioned_modes, kernel_spectrum

ZERO_MEAN_RTOL = 1e-6
SKIPPED_ENERGY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class DeconvolutionDiagnostics:
    skipped: np.ndarray  # boolean mask over FFT modes
    skipped_energy: float  # fraction of |phi_hat|^2 sitting on skipped modes

    @property
    def n_skipped(self) -> int:
        return int(self.skipped.sum())


def _as_kernel(kernel, dim) -> KernelSpec:
    if isinstance(kernel, KernelSpec):
        return kernel
    return KernelSpec.repulsive(float(kernel), dim=dim)


def _fix_constant(rho, cell_volume, volume, mass, constant):
    if mass is not None and constant is not None:
        raise ValueError("give either mass or constant, not both")
    if constant is not None:
        return rho + constant
    target = 0.0 if mass is None else mass
    return rho + (target - rho.sum() * cell_volume) / volume


def _check_zero_mean(values, dx):
    mean = values.mean()
    scale = np.sqrt(np.mean(values * values))
    if abs(mean) > ZERO_MEAN_RTOL * scale + 1e-14:
        raise NonZeroMeanInput(
            f"velocity field has mean {mean:.3e} (rms {scale:.3e}); odd kernels only produce zero-mean fields"
        )


def ode_profile(phi: np.ndarray, L: float, dx: float) -> np.ndarray:
    """``(1/2) * antiderivative(phi_xx - phi / L**2)`` anchored at 0; array in, array out."""
    phi = phi - phi.mean()
    return 0.5 * cumulative_midpoint(diff2(phi, dx) - phi / L**2, dx)


def deconvolve_1d(
    phi: PeriodicField,
    kernel,
    mass: float | None = None,
    constant: float | None = None,
    method: str = "ode",
    full_output: bool = False,
):
    """Density whose convolution with ``kernel`` is ``phi``.

    Parameters
    ----------
    phi : PeriodicField
        Zero-mean 1D velocity field.
    kernel : float or KernelSpec
        Length scale of the unit repulsive kernel, or a kernel spec.
    mass, constant : float, optional
        Constant rule.  ``mass`` fixes the integral; ``constant`` is added to
        the raw profile (for ``ode`` the profile is anchored at zero
        on the first cell, for ``spectral`` it has zero mean).  With neither
        the result has zero mean.
    method : {"ode", "spectral"}
        ``ode`` integrates the second-order ODE with central
        differences (single-component kernels only); ``spectral`` divides by
        the discrete kernel symbol and is exact up to round-off on the grid.
    """
    grid = phi.grid
    if grid.dim != 1 or phi.is_vector:
        raise GridMismatch("deconvolve_1d expects a scalar field on a 1D grid")
    kernel = _as_kernel(kernel, 1)
    _check_zero_mean(phi.values, grid.dx)
    diag = None
    if method == "ode":
        if len(kernel.components) != 1:
            raise ValueError("the ODE route needs a single-component kernel; use method='spectral'")
        c = kernel.components[0]
        rho = ode_profile(phi.values, c.L, grid.dx) / c.weight
        rho = _fix_constant(rho, grid.dx, grid.volume, mass, constant)
    elif method == "spectral":
        rho, diag = _spectral_solve(phi.values[None], kernel, grid)
        rho = _fix_constant(rho, grid.dx, grid.volume, mass, constant)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = PeriodicField(grid, rho)
    return (out, diag) if full_output else out


def _spectral_solve(phi_components: np.ndarray, kernel: KernelSpec, grid):
    """Least-squares ``sum_c conj(F_c) phi_c / sum_c |F_c|^2`` on well-conditioned modes."""
    axes = tuple(range(-grid.dim, 0))
    F = kernel_spectrum(kernel, grid)
    if grid.dim == 1:
        F = F[None]
    skip = ill_conditioned_modes(kernel, grid)
    P = np.fft.fftn(phi_components, axes=axes)
    num = np.sum(np.conj(F) * P, axis=0)
    den = np.sum(np.abs(F) ** 2, axis=0)
    R = np.where(skip, 0.0, num / np.where(skip, 1.0, den))
    energy = np.sum(np.abs(P) ** 2, axis=0)
    total = energy.sum()
    frac = float(energy[skip].sum() / total) if total > 0 else 0.0
    if frac > SKIPPED_ENERGY_RTOL:
        warnings.warn(
            f"{frac:.1%} of the input energy sits on {int(skip.sum())} non-invertible modes and was dropped",
            IllConditionedMode,
            stacklevel=3,
        )
    rho = np.fft.ifftn(R, axes=axes).real
    return rho, DeconvolutionDiagnostics(skip, frac)


def deconvolve_2d(
    phi: PeriodicField,
    kernel: KernelSpec,
    mass: float | None = None,
    constant: float | None = None,
    full_output: bool = False,
):
    """Spectral least-squares inverse of a 2D vector convolution.

    Each Fourier mode gives two equations (one per velocity component) for a
    single density coefficient.  Modes where the kernel symbol vanishes are
    skipped and reported; the zero mode is always among them and is set by
    the constant rule (``constant`` is added to the zero-mean solution).
    """
    grid = phi.grid
    if grid.dim != 2 or not phi.is_vector:
        raise GridMismatch("deconvolve_2d expects a vector field on a 2D grid")
    kernel = _as_kernel(kernel, 2)
    rho, diag = _spectral_solve(phi.values, kernel, grid)
    rho = _fix_constant(rho, grid.cell_volume, grid.volume, mass, constant)
    out = PeriodicField(grid, rho)
    return (out, diag) if full_output else out


def deconvolve(phi: PeriodicField, kernel, **kw):
    if phi.grid.dim == 1:
        return deconvolve_1d(phi, kernel, **kw)
    return deconvolve_2d(phi, kernel, **kw)
