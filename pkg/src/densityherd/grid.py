"""Uniform periodic grids on the circle [-pi, pi) and the torus [-pi, pi)^2.

Cells are centred: node ``j`` sits at ``-pi + (j + 1/2) dx`` and no endpoint
is duplicated, so sums over cells are exact periodic quadratures and
convolutions are circulant.

2D arrays are indexed ``[i1, i2]`` (axis 0 is x1).  Flattened and CSV forms
use x1 as the fastest-varying coordinate, i.e. ``values.T.ravel()``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import GridMismatch, NonPeriodicAntiderivative

TWO_PI = 2.0 * np.pi
NEGATIVE_TOLERANCE = 1e-12
FIELD_KINDS = ("density", "velocity", "generic")


@dataclass(frozen=True)
class PeriodicGrid:
    """Cell-centred uniform grid with ``n`` cells per axis."""

    n: int
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 4:
            raise ValueError(f"need at least 4 cells per axis, got {self.n}")

    @property
    def dx(self) -> float:
        return TWO_PI / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def volume(self) -> float:
        return TWO_PI**self.dim

    @property
    def nodes(self) -> np.ndarray:
        """Cell-centre coordinates along one axis."""
        return _nodes(self.n)

    def mesh(self) -> tuple:
        """Coordinate arrays shaped like the grid (``indexing='ij'``)."""
        if self.dim == 1:
            return (self.nodes,)
        return tuple(np.meshgrid(self.nodes, self.nodes, indexing="ij"))

    def displacements(self) -> tuple:
        """Wrapped displacements ``m dx`` indexed like a convolution table."""
        m = wrap_displacement(np.arange(self.n) * self.dx, 0.0)
        if self.dim == 1:
            return (m,)
        return tuple(np.meshgrid(m, m, indexing="ij"))


@lru_cache(maxsize=None)
def _nodes(n: int) -> np.ndarray:
    x = -np.pi + TWO_PI / n * (np.arange(n) + 0.5)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Samples of a scalar (or vector) field on a :class:`PeriodicGrid`.

    Vector fields carry a leading component axis: ``values.shape ==
    (grid.dim,) + grid.shape``.
    """

    grid: PeriodicGrid
    values: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        values = np.array(self.values, dtype=float)
        shape = self.grid.shape
        if values.shape != shape and values.shape != (self.grid.dim,) + shape:
            raise GridMismatch(f"values of shape {values.shape} do not fit grid {shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.kind == "density":
            if self.is_vector:
                raise ValueError("a density must be scalar")
            if values.min() < -NEGATIVE_TOLERANCE:
                raise ValueError(f"density has negative values (min {values.min():.3e})")
            if integrate(self) <= 0:
                raise ValueError("density must have positive mass")

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.dim + 1

    def with_values(self, values, kind=None) -> "PeriodicField":
        return PeriodicField(self.grid, values, self.kind if kind is None else kind)

    def component(self, i: int) -> "PeriodicField":
        return PeriodicField(self.grid, self.values[i], "generic")

    def __len__(self):
        return self.grid.size


# ---------------------------------------------------------------------------
# array kernels (used directly by the simulators' inner loops)


@lru_cache(maxsize=None)
def _slices(ndim: int, axis: int):
    def at(s):
        idx = [slice(None)] * ndim
        idx[axis] = s
        return tuple(idx)

    return (
        at(slice(1, -1)), at(slice(2, None)), at(slice(None, -2)),
        at(slice(0, 1)), at(slice(1, 2)), at(slice(-1, None)), at(slice(-2, -1)),
    )


def diff1(a: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Central first difference with periodic wrap-around."""
    mid, hi, lo, first, second, last, penult = _slices(a.ndim, axis % a.ndim)
    out = np.empty_like(a)
    np.subtract(a[hi], a[lo], out=out[mid])
    np.subtract(a[second], a[last], out=out[first])
    np.subtract(a[first], a[penult], out=out[last])
    out *= 0.5 / dx
    return out


def diff2(a: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Three-point second difference with periodic wrap-around."""
    mid, hi, lo, first, second, last, penult = _slices(a.ndim, axis % a.ndim)
    out = -2.0 * a
    out[mid] += a[hi]
    out[mid] += a[lo]
    out[first] += a[second] + a[last]
    out[last] += a[first] + a[penult]
    out *= 1.0 / dx**2
    return out


def laplacian_array(a: np.ndarray, dx: float, axes=None) -> np.ndarray:
    axes = range(a.ndim) if axes is None else axes
    return sum(diff2(a, dx, ax) for ax in axes)


def cumulative_midpoint(a: np.ndarray, dx: float, anchor: float = 0.0) -> np.ndarray:
    """``F_i = anchor + dx (sum_{j<i} a_j + a_i / 2)``."""
    out = np.cumsum(a)
    out -= 0.5 * a
    out *= dx
    if anchor:
        out += anchor
    return out


def convolve_arrays(table: np.ndarray, values: np.ndarray, cell_volume: float) -> np.ndarray:
    """Circular convolution of a displacement table with grid values via FFT.

    ``table`` may carry a leading vector-component axis.
    """
    nd = values.ndim
    axes = tuple(range(-nd, 0))
    spec = np.fft.rfftn(values, axes=axes)
    kern = np.fft.rfftn(table, axes=axes)
    return np.fft.irfftn(kern * spec, s=values.shape, axes=axes) * cell_volume


def convolve_direct(table: np.ndarray, values: np.ndarray, cell_volume: float) -> np.ndarray:
    """Same as :func:`convolve_arrays` but by explicit summation (reference path)."""
    nd = values.ndim
    n = values.shape[0]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    if nd == 1:
        if table.ndim == 2:
            return np.stack([t[idx] @ values for t in table]) * cell_volume
        return table[idx] @ values * cell_volume
    comps = table if table.ndim == 3 else table[None]
    out = np.empty(comps.shape[:1] + values.shape)
    for c, t in enumerate(comps):
        # sum_{j1,j2} t[i1-j1, i2-j2] v[j1, j2]
        big = t[idx][:, :, idx]  # [i1, j1, i2, j2]
        out[c] = np.einsum("ajbk,jk->ab", big, values)
    out *= cell_volume
    return out if table.ndim == 3 else out[0]


# ---------------------------------------------------------------------------
# public operations on fields


def wrap_displacement(x, y=0.0):
    """Relative position ``x - y`` wrapped into ``[-pi, pi)``."""
    return np.mod(np.subtract(x, y) + np.pi, TWO_PI) - np.pi


def integrate(f: PeriodicField) -> float | np.ndarray:
    """Midpoint-rule integral over the domain (componentwise for vectors)."""
    axes = tuple(range(-f.grid.dim, 0))
    return np.sum(f.values, axis=axes) * f.grid.cell_volume


def derivative(f: PeriodicField, order: int = 1, axis: int = 0) -> PeriodicField:
    """Second-order central difference along ``axis`` (``order`` 1 or 2)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if f.is_vector:
        raise ValueError("derivative expects a scalar field")
    op = diff1 if order == 1 else diff2
    return PeriodicField(f.grid, op(f.values, f.grid.dx, axis), "generic")


def gradient(f: PeriodicField) -> PeriodicField:
    return PeriodicField(
        f.grid, np.stack([diff1(f.values, f.grid.dx, a) for a in range(f.grid.dim)])
    )


def divergence(f: PeriodicField) -> PeriodicField:
    if not f.is_vector:
        raise ValueError("divergence expects a vector field")
    dx = f.grid.dx
    return PeriodicField(f.grid, sum(diff1(c, dx, a) for a, c in enumerate(f.values)))


def laplacian(f: PeriodicField) -> PeriodicField:
    return PeriodicField(f.grid, laplacian_array(f.values, f.grid.dx))


def antiderivative(f: PeriodicField, anchor: float = 0.0) -> PeriodicField:
    """Cumulative midpoint integral anchored at the first cell.

    The result is periodic only when ``f`` has zero mean; a
    :class:`NonPeriodicAntiderivative` warning flags the other case.
    """
    if f.grid.dim != 1 or f.is_vector:
        raise ValueError("antiderivative is defined on 1D scalar fields")
    v = f.values
    scale = np.sqrt(np.sum(v * v) * f.grid.dx)
    if abs(integrate(f)) > 1e-8 * scale:
        warnings.warn(
            f"antiderivative of a field with mean {integrate(f):.3e} is not periodic",
            NonPeriodicAntiderivative,
            stacklevel=2,
        )
    return PeriodicField(f.grid, cumulative_midpoint(v, f.grid.dx, anchor))


KernelLike = Union[Callable, np.ndarray, "KernelSpec"]  # noqa: F821


def kernel_table(f, grid: PeriodicGrid) -> np.ndarray:
    """Samples of ``f`` at the wrapped displacements of ``grid``."""
    from .kernel import KernelSpec, sample_table

    if isinstance(f, KernelSpec):
        return sample_table(f, grid)
    if callable(f):
        return np.asarray(f(*grid.displacements()), dtype=float)
    table = np.asarray(f, dtype=float)
    if table.shape[-grid.dim:] != grid.shape:
        raise GridMismatch(f"kernel table {table.shape} does not fit grid {grid.shape}")
    return table


def circular_convolve(f, g: PeriodicField, method: str = "spectral") -> PeriodicField:
    """``(f*g)_i = sum_j f(wrap(x_i - x_j)) g_j dx^d``.

    ``f`` is a :class:`~densityherd.kernel.KernelSpec`, a vectorised callable
    of the wrapped displacement, or a precomputed displacement table (as
    returned by :func:`kernel_table`).  Vector kernels give vector fields.
    """
    if isinstance(f, PeriodicField):
        if f.grid != g.grid:
            raise GridMismatch("fields live on different grids")
        f = f.values
    table = kernel_table(f, g.grid)
    if g.is_vector:
        raise ValueError("only scalar fields can be convolved")
    if method == "spectral":
        out = convolve_arrays(table, g.values, g.grid.cell_volume)
    elif method == "direct":
        out = convolve_direct(table, g.values, g.grid.cell_volume)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PeriodicField(g.grid, out, "velocity" if table.ndim > g.grid.dim else "generic")


def wavenumbers(grid: PeriodicGrid) -> tuple:
    """Integer wavenumbers matching :func:`spectral_transform` output."""
    k = np.fft.fftfreq(grid.n, 1.0 / grid.n)
    if grid.dim == 1:
        return (k,)
    return tuple(np.meshgrid(k, k, indexing="ij"))


def spectral_transform(f: PeriodicField) -> np.ndarray:
    """Discrete Fourier coefficients over the grid axes (numpy convention)."""
    axes = tuple(range(-f.grid.dim, 0))
    return np.fft.fftn(f.values, axes=axes)


def inverse_spectral_transform(coeffs: np.ndarray, grid: PeriodicGrid, kind="generic") -> PeriodicField:
    axes = tuple(range(-grid.dim, 0))
    return PeriodicField(grid, np.fft.ifftn(coeffs, axes=axes).real, kind)


def periodic_max(values: np.ndarray, refine: int = 8, newton_steps: int = 6) -> float:
    """Maximum of the trigonometric interpolant of periodic samples.

    The interpolant is sampled ``refine`` times finer to bracket the peak,
    which is then polished with Newton steps on its derivative.  Unlike the
    largest sample, the result does not depend on where the peak falls
    relative to the nodes.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    c = np.fft.rfft(v) / n
    w = np.full(c.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    c = c * w
    k = np.arange(c.size)
    fine = np.fft.irfft(c / w * n * refine, n * refine)
    s = np.argmax(fine) / refine  # position in units of cells

    def evaluate(s):
        e = np.exp(2j * np.pi * k * s / n)
        ce = c * e
        w1 = 2j * np.pi * k / n
        return ce.real.sum(), (w1 * ce).real.sum(), (w1 * w1 * ce).real.sum()

    best, d1, d2 = evaluate(s)
    for _ in range(newton_steps):
        if d2 >= 0:
            break
        s_new = s - d1 / d2
        if abs(s_new - s) > 1.0:
            break
        f_new, d1_new, d2_new = evaluate(s_new)
        if f_new < best:
            break
        s, best, d1, d2 = s_new, f_new, d1_new, d2_new
    return float(max(best, v.max()))


# ---------------------------------------------------------------------------
# field snapshots


def _fmt(v: float) -> str:
    return repr(float(v))


def write_field_csv(f: PeriodicField, path) -> None:
    """Write ``x[,y],value`` rows in cell-centre order, x1 fastest."""
    if f.is_vector:
        raise ValueError("field snapshots hold scalar fields")
    x = f.grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if f.grid.dim == 1:
            w.writerow(["x", "value"])
            for xi, v in zip(x, f.values):
                w.writerow([_fmt(xi), _fmt(v)])
        else:
            w.writerow(["x", "y", "value"])
            for j, y in enumerate(x):
                for i, xi in enumerate(x):
                    w.writerow([_fmt(xi), _fmt(y), _fmt(f.values[i, j])])


def read_field_csv(path, kind="generic") -> PeriodicField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if header == ["x", "value"]:
        return PeriodicField(PeriodicGrid(len(body), 1), body[:, 1], kind)
    if header == ["x", "y", "value"]:
        n = int(round(np.sqrt(len(body))))
        return PeriodicField(PeriodicGrid(n, 2), body[:, 2].reshape(n, n).T, kind)
    raise ValueError(f"unrecognised field header {header}")
