"""Periodic interaction kernels.

The base (non-periodic) repulsive kernel is ``sign(x) exp(-|x|/L)`` in 1D and
``x/|x| exp(-|x|/L)`` in 2D.  Its periodization ``sum_k fhat(x + 2 pi k)`` has
a closed form in 1D; in 2D the image sum is truncated at ``|k_i| <= K``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import TWO_PI, PeriodicGrid, wrap_displacement

SELF_CHECK_TOL = 1e-6
ILL_CONDITIONED_RTOL = 1e-14


@dataclass(frozen=True)
class KernelComponent:
    weight: float
    L: float

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"length scale must be positive, got {self.L}")
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "L", float(self.L))


@dataclass(frozen=True)
class KernelSpec:
    """Weighted sum of periodized repulsive exponentials.

    Negative weights give attractive components.  ``truncation_K`` is only
    used in 2D, where the image sum is checked against ``K + 4`` images at
    construction.
    """

    components: tuple
    dim: int = 1
    truncation_K: int = 10

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, KernelComponent) else KernelComponent(**c) if isinstance(c, dict)
            else KernelComponent(*c)
            for c in self.components
        )
        if not comps:
            raise ValueError("a kernel needs at least one component")
        object.__setattr__(self, "components", comps)
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.truncation_K < 1:
            raise ValueError("truncation_K must be at least 1")
        if self.dim == 2:
            _check_truncation(self)

    @classmethod
    def repulsive(cls, L: float, dim: int = 1, weight: float = 1.0, truncation_K: int = 10):
        return cls((KernelComponent(weight, L),), dim, truncation_K)

    @property
    def is_single_repulsive(self) -> bool:
        return len(self.components) == 1 and self.components[0].weight == 1.0

    @property
    def L(self) -> float:
        """Length scale of a single-component kernel."""
        if len(self.components) != 1:
            raise ValueError("kernel has several length scales")
        return self.components[0].L

    def __call__(self, *x):
        if self.dim == 1:
            return kernel_eval_1d(self, *x)
        return kernel_eval_2d(self, *x)


def _check_truncation(spec: KernelSpec) -> None:
    p = np.array([0.0, 1.0, -np.pi, 2.5, -3.0])
    x1, x2 = np.meshgrid(p, p, indexing="ij")
    a = kernel_eval_2d(spec, x1, x2)
    b = kernel_eval_2d(spec, x1, x2, K=spec.truncation_K + 4)
    gap = np.abs(a - b).max()
    if gap >= SELF_CHECK_TOL:
        raise ValueError(
            f"image sum with K={spec.truncation_K} has not converged ({gap:.2e}); increase truncation_K"
        )


def base_kernel_1d(x, L):
    return np.sign(x) * np.exp(-np.abs(x) / L)


def base_kernel_2d(x1, x2, L):
    r = np.hypot(x1, x2)
    safe = np.where(r > 0, r, 1.0)
    e = np.where(r > 0, np.exp(-r / L), 0.0)
    # unit vector first: exp/r overflows for subnormal r
    return np.stack([x1 / safe * e, x2 / safe * e])


def kernel_eval_1d(spec: KernelSpec, x):
    """Closed-form periodized kernel at wrapped displacement ``x``."""
    x = wrap_displacement(np.asarray(x, dtype=float))
    ax = np.abs(x)
    out = np.zeros_like(x)
    for c in spec.components:
        q = np.expm1(TWO_PI / c.L)
        out = out + c.weight / q * (np.exp((TWO_PI - ax) / c.L) - np.exp(ax / c.L))
    return np.sign(x) * out


def periodize_series(f_hat, x, K: int):
    """``sum_{k=-K}^{K} f_hat(x + 2 pi k)``; ``x`` is an array or a tuple of per-axis arrays."""
    shifts = TWO_PI * np.arange(-K, K + 1)
    if not isinstance(x, tuple):
        x = np.asarray(x, dtype=float)
        return sum(f_hat(x + s) for s in shifts)
    x1, x2 = (np.asarray(c, dtype=float) for c in x)
    return sum(f_hat(x1 + s1, x2 + s2) for s1 in shifts for s2 in shifts)


def kernel_eval_2d(spec: KernelSpec, x1, x2, K: int | None = None):
    """Truncated image sum of the radial base kernel; returns shape ``(2, ...)``.

    The sum is antisymmetrised, ``(S(x) - S(-x)) / 2``, so oddness holds to
    the last bit rather than up to summation-order round-off.
    """
    K = spec.truncation_K if K is None else K
    x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
    return 0.5 * (_image_sum(spec, x1, x2, K) - _image_sum(spec, -x1, -x2, K))


def _image_sum(spec, x1, x2, K):
    out = np.zeros((2,) + x1.shape)
    for c in spec.components:
        # images in order of increasing |k| so +k and -k pair up
        acc = np.zeros_like(out)
        for k1 in _symmetric_order(K):
            for k2 in _symmetric_order(K):
                acc += base_kernel_2d(x1 + TWO_PI * k1, x2 + TWO_PI * k2, c.L)
        out += c.weight * acc
    return out


def _symmetric_order(K):
    return [0] + [s * k for k in range(1, K + 1) for s in (1, -1)]


@lru_cache(maxsize=64)
def sample_table(spec: KernelSpec, grid: PeriodicGrid) -> np.ndarray:
    """Kernel at the grid's wrapped displacements, shaped for circular convolution.

    1D tables have shape ``(n,)``, 2D tables ``(2, n, n)``.  Cached per
    (spec, grid) and returned read-only.
    """
    if spec.dim != grid.dim:
        raise ValueError(f"{spec.dim}D kernel on a {grid.dim}D grid")
    d = grid.displacements()
    table = kernel_eval_1d(spec, *d) if spec.dim == 1 else kernel_eval_2d(spec, *d)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=64)
def kernel_spectrum(spec: KernelSpec, grid: PeriodicGrid) -> np.ndarray:
    """Full FFT of the sample table times the cell volume (per vector component in 2D)."""
    axes = tuple(range(-grid.dim, 0))
    spec_hat = np.fft.fftn(sample_table(spec, grid), axes=axes) * grid.cell_volume
    spec_hat.setflags(write=False)
    return spec_hat


@lru_cache(maxsize=64)
def ill_conditioned_modes(spec: KernelSpec, grid: PeriodicGrid) -> np.ndarray:
    """Mask of modes whose kernel symbol is numerically zero.

    For an odd kernel these are always the modes whose wavenumbers are 0 or
    n/2 on every axis.
    """
    F = kernel_spectrum(spec, grid)
    power = np.abs(F) ** 2
    if grid.dim == 2:
        power = power.sum(axis=0)
    mask = power < ILL_CONDITIONED_RTOL * power.max()
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=64)
def _half_spectrum(spec: KernelSpec, grid: PeriodicGrid) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    return np.fft.rfftn(sample_table(spec, grid), axes=axes) * grid.cell_volume


def convolve_table(spec: KernelSpec, values: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Velocity field ``f * values`` from the cached spectrum (array in, array out)."""
    axes = tuple(range(-grid.dim, 0))
    F = _half_spectrum(spec, grid)
    return np.fft.irfftn(F * np.fft.rfftn(values), s=grid.shape, axes=axes)
