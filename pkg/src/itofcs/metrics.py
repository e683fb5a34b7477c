"""Depth-map error metrics and sparse-vector reconstruction error."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in mm with a validity mask.

    Pixels whose value is non-finite or not positive are always invalid.
    """

    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("depth map must be 2-D")
        finite = np.isfinite(values) & (values > 0)
        mask = finite if self.mask is None else np.asarray(self.mask, dtype=bool) & finite
        if mask.shape != values.shape:
            raise ValueError("mask shape does not match depth values")
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def _joint(pred: DepthMap, truth: DepthMap) -> np.ndarray:
    if pred.values.shape != truth.values.shape:
        raise ValueError(f"shape mismatch {pred.values.shape} vs {truth.values.shape}")
    mask = pred.mask & truth.mask
    if not mask.any():
        raise ValueError("no jointly valid pixels")
    return mask


def mae(pred: DepthMap, truth: DepthMap) -> float:
    m = _joint(pred, truth)
    return float(np.mean(np.abs(pred.values[m] - truth.values[m])))


def rmse(pred: DepthMap, truth: DepthMap) -> float:
    m = _joint(pred, truth)
    return float(np.sqrt(np.mean((pred.values[m] - truth.values[m]) ** 2)))


def ssim_constants(depth_range: float):
    return (0.01 * depth_range) ** 2, (0.03 * depth_range) ** 2


def ssim(pred: DepthMap, truth: DepthMap, window: int = 7, c1: Optional[float] = None,
         c2: Optional[float] = None, depth_range: float = 1000.0) -> float:
    """Mean SSIM over every ``window x window`` patch that is fully valid.

    Statistics use uniform weights and population (1/n) moments.  ``c1`` and
    ``c2`` default to ``(0.01 R)^2`` and ``(0.03 R)^2`` with ``R = depth_range``.
    """
    m = _joint(pred, truth)
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and at least 3")
    if min(m.shape) < window:
        raise ValueError("depth map smaller than the SSIM window")
    d1, d2 = ssim_constants(depth_range)
    c1 = d1 if c1 is None else c1
    c2 = d2 if c2 is None else c2
    a = np.where(m, pred.values, 0.0)
    b = np.where(m, truth.values, 0.0)
    ok = sliding_window_view(m, (window, window)).all(axis=(-2, -1))
    if not ok.any():
        raise ValueError("no fully valid SSIM window")
    wa = sliding_window_view(a, (window, window))[ok]
    wb = sliding_window_view(b, (window, window))[ok]
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    va = wa.var(axis=(-2, -1))
    vb = wb.var(axis=(-2, -1))
    cov = ((wa - mu_a[:, None, None]) * (wb - mu_b[:, None, None])).mean(axis=(-2, -1))
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2))
    return float(s.mean())


def recon_error_pct(g_hat, g_true) -> float:
    """Relative L2 error ``100 ||g_hat - g|| / ||g||``."""
    g_hat = np.asarray(g_hat)
    g_true = np.asarray(g_true)
    if g_hat.shape != g_true.shape:
        raise ValueError("vectors differ in length")
    ref = np.linalg.norm(g_true)
    if ref == 0:
        raise ValueError("reference vector is zero")
    return float(100.0 * np.linalg.norm(g_hat - g_true) / ref)


@dataclass
class MetricsReport:
    method: str
    mae: float
    rmse: float
    ssim: Optional[float]          # None when the map has no fully valid window
    n_valid: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "mae": self.mae,
            "rmse": self.rmse,
            "ssim": self.ssim,
            "n_valid": self.n_valid,
            "config": self.config,
        }


def evaluate(pred: DepthMap, truth: DepthMap, method: str = "", depth_range: float = 1000.0,
             window: int = 7, config: Optional[dict] = None) -> MetricsReport:
    m = _joint(pred, truth)
    s = None
    if min(m.shape) >= window and sliding_window_view(m, (window, window)).all(axis=(-2, -1)).any():
        s = ssim(pred, truth, window, depth_range=depth_range)
    return MetricsReport(method, mae(pred, truth), rmse(pred, truth), s, int(m.sum()),
                         dict(config or {}))


def reports_to_json(reports, **extra) -> str:
    ordered = sorted(reports, key=lambda r: (r.mae, r.method))
    return json.dumps({"reports": [r.to_dict() for r in ordered], **extra}, indent=2,
                      sort_keys=True)
