"""Error and divergence metrics."""
from __future__ import annotations

import warnings

import numpy as np

from .errors import GridMismatch, SupportViolation
from .grid import PeriodicField

KL_FLOOR = 1e-12


def squared_error(ref: np.ndarray, actual: np.ndarray, cell_volume: float) -> float:
    d = ref - actual
    return float(np.vdot(d, d).real * cell_volume)


def percentage_error(sq_norms) -> np.ndarray:
    """Squared error history as a percentage of its largest value.

    An identically zero history maps to zeros.
    """
    e = np.asarray(sq_norms, dtype=float)
    if e.size == 0:
        raise ValueError("empty error history")
    peak = e.max()
    if peak <= 0:
        return np.zeros_like(e)
    return (e / peak) * 100.0


class RunningPercentage:
    """Streaming version: values relative to the maximum seen so far.

    ``finalize`` renormalises the whole history by the overall maximum,
    which is what gets written to disk.
    """

    def __init__(self):
        self.history = []
        self.peak = 0.0

    def push(self, sq_norm: float) -> float:
        self.history.append(float(sq_norm))
        self.peak = max(self.peak, sq_norm)
        return (sq_norm / self.peak) * 100.0 if self.peak > 0 else 0.0

    def finalize(self) -> np.ndarray:
        return percentage_error(self.history)


def kl_array(ref: np.ndarray, actual: np.ndarray, cell_volume: float, warn: bool = True) -> float:
    pos = ref > 0
    denom = actual[pos]
    if warn and denom.min(initial=np.inf) < KL_FLOOR:
        warnings.warn("density vanishes where the reference does not; floored", SupportViolation, stacklevel=3)
    r = ref[pos]
    return float(np.sum(r * np.log(r / np.maximum(denom, KL_FLOOR))) * cell_volume)


def kl_divergence(ref: PeriodicField, actual: PeriodicField) -> float:
    """``int ref log(ref / actual)`` by the midpoint rule."""
    if ref.grid != actual.grid:
        raise GridMismatch("densities live on different grids")
    return kl_array(ref.values, actual.values, ref.grid.cell_volume)
