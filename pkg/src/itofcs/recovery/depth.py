"""Depth from a sparse solution (weighted Top-K centroid) and the naive phase decoder."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..sensing import C_LIGHT, DepthGrid, ModulationPlan
from ..simulator import RawFourPhase, to_complex_observation
from .pursuit import SparseSolution


class DepthClampWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DepthEstimate:
    depth_index: float
    depth_mm: float
    primary_amplitude: float
    secondary_paths: Tuple[Tuple[float, float], ...] = ()
    clamped: bool = False


class LookupTable:
    """Monotone map from fractional bin index to depth, linearly interpolated."""

    def __init__(self, index, depth_mm):
        index = np.asarray(index, dtype=float)
        depth_mm = np.asarray(depth_mm, dtype=float)
        if index.ndim != 1 or index.shape != depth_mm.shape or index.size < 2:
            raise ValueError("lookup table needs two equal-length 1-D columns")
        if np.any(np.diff(index) <= 0) or np.any(np.diff(depth_mm) <= 0):
            raise ValueError("lookup table must be strictly increasing")
        self.index = index
        self.depth_mm = depth_mm

    @classmethod
    def from_grid(cls, grid: DepthGrid) -> "LookupTable":
        return cls(np.arange(grid.n_bins), grid.depths)

    @classmethod
    def load_csv(cls, path) -> "LookupTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["index"]) for r in rows], [float(r["depth_mm"]) for r in rows])

    def __call__(self, idx):
        return np.interp(idx, self.index, self.depth_mm)


def index_to_depth(depth_index: float, grid: DepthGrid,
                   lut: Optional[LookupTable] = None) -> Tuple[float, bool]:
    """Map a fractional bin index to millimetres; returns ``(depth, clamped)``."""
    last = grid.n_bins - 1
    clamped = not (0 <= depth_index <= last)
    if clamped:
        warnings.warn(f"depth index {depth_index} clamped to [0, {last}]", DepthClampWarning)
        depth_index = min(max(depth_index, 0.0), float(last))
    if lut is not None:
        return float(lut(depth_index)), clamped
    return grid.d_min + depth_index * grid.step, clamped


def extract_depth_index(sol: SparseSolution, grid: DepthGrid, k_top: int = 3, window: int = 3,
                        lut: Optional[LookupTable] = None) -> DepthEstimate:
    """Weighted centroid of the strongest atom and up to ``k_top-1`` neighbours.

    Neighbours are the largest-|x| support entries within ``window`` bins of the
    strongest atom.  Everything else in the support is reported as a secondary
    path ``(depth_mm, |x|)``.
    """
    if k_top < 1 or window < 0:
        raise ValueError("k_top must be >= 1 and window >= 0")
    support = np.asarray(sol.support, dtype=int)
    mag = np.abs(sol.coefficients)
    if support.size == 0 or not np.any(mag > 0):
        raise ValueError("cannot extract depth from an empty solution")
    order = np.argsort(-mag, kind="stable")
    lead = support[order[0]]
    near = [p for p in order if abs(support[p] - lead) <= window and mag[p] > 0][:k_top]
    w = mag[near]
    idx = float(np.sum(w * support[near]) / np.sum(w))
    depth, clamped = index_to_depth(idx, grid, lut)
    rest = [p for p in order if p not in near and mag[p] > 0]
    secondary = tuple(
        (index_to_depth(float(support[p]), grid, lut)[0], float(mag[p])) for p in rest
    )
    return DepthEstimate(idx, depth, float(np.sum(w)), secondary, clamped)


def _phase_to_depth(phase, f_mod: float):
    return C_LIGHT * np.mod(phase, 2 * math.pi) / (4 * math.pi * f_mod) * 1e3


def naive_four_phase_depth(raw: RawFourPhase, plan: ModulationPlan, config: int = 0,
                           eps: float = 1e-12):
    """Classic four-tap phase decoder using one phase configuration.

    Pixels whose taps are balanced (no signal) come back as NaN.
    """
    c = to_complex_observation(raw)[..., config]
    phase = np.angle(c) + plan.phase_shifts[config]
    depth = _phase_to_depth(phase, plan.f_mod)
    return np.where(np.abs(c) > eps, depth, np.nan)


def naive_fused_depth(raw: RawFourPhase, plan: ModulationPlan, eps: float = 1e-12):
    """Four-tap decoder with all configurations rotated back and summed."""
    c = to_complex_observation(raw)
    z = np.sum(c * np.exp(1j * plan.phases), axis=-1)
    depth = _phase_to_depth(np.angle(z), plan.f_mod)
    return np.where(np.abs(z) > eps, depth, np.nan)

