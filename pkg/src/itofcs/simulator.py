"""Synthetic iToF measurements: multipath scenes, four-phase taps, calibration scans."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .sensing import (
    AtomModel,
    CameraIntrinsics,
    DepthGrid,
    ModulationPlan,
    SensingMatrix,
    TAP_OFFSETS,
    corrected_range,
    matrix_from_columns,
    normalized_coords,
    tap_intensity,
)

PathList = Sequence[Tuple[float, float]]


@dataclass(frozen=True, eq=False)
class MultipathScene:
    """Per-pixel return paths as ``(H, W, P)`` arrays of depth (mm) and amplitude.

    Depths are axial-equivalent: a path with depth ``d`` seen by pixel ``(x, y)``
    travels ``corrected_range(d, x, y)`` each way.  Zero-amplitude entries pad
    pixels that have fewer than ``P`` paths.
    """

    depths: np.ndarray
    amplitudes: np.ndarray
    label: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        depths = np.array(self.depths, dtype=float)
        amps = np.array(self.amplitudes, dtype=float)
        if depths.ndim == 2:  # single pixel row of paths
            depths, amps = depths[None], amps[None]
        if depths.ndim != 3 or depths.shape != amps.shape or depths.shape[2] < 1:
            raise ValueError("scene arrays must both have shape (H, W, P) with P >= 1")
        if np.any(amps < 0) or not np.all(np.isfinite(amps)):
            raise ValueError("path amplitudes must be finite and nonnegative")
        if np.any(depths <= 0):
            raise ValueError("path depths must be positive")
        depths.flags.writeable = False
        amps.flags.writeable = False
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depths.shape[:2]

    def pixel_paths(self, v: int, u: int) -> list:
        return [(float(d), float(a)) for d, a in zip(self.depths[v, u], self.amplitudes[v, u])]

    def primary_depth(self) -> np.ndarray:
        """Axial depth of the largest-amplitude path at every pixel."""
        idx = np.argmax(self.amplitudes, axis=2)
        return np.take_along_axis(self.depths, idx[..., None], axis=2)[..., 0]

    def check_grid(self, grid: DepthGrid) -> None:
        last = grid.d_min + (grid.n_bins - 1) * grid.step
        used = self.amplitudes > 0
        if np.any(used & ((self.depths < grid.d_min) | (self.depths > last))):
            raise ValueError("scene has paths outside the depth grid")


@dataclass(frozen=True)
class NoiseModel:
    """Per-frame sensor noise and dark level, in tap-intensity units.

    A unit-amplitude return peaks at a tap intensity of 1, so the default
    ``read_noise_sigma`` is 1% of the peak single-path tap.
    """

    read_noise_sigma: float = 0.01
    shot_noise: bool = False
    shot_gain: float = 1e-4  # variance per unit intensity when shot_noise is on
    dark_offset: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.read_noise_sigma < 0 or self.dark_offset < 0 or self.shot_gain < 0:
            raise ValueError("noise parameters must be nonnegative")

    @classmethod
    def noiseless(cls, dark_offset: float = 0.0, seed: int = 0) -> "NoiseModel":
        return cls(read_noise_sigma=0.0, shot_noise=False, dark_offset=dark_offset, seed=seed)

    def to_dict(self) -> dict:
        return {
            "read_noise_sigma": self.read_noise_sigma,
            "shot_noise": self.shot_noise,
            "shot_gain": self.shot_gain,
            "dark_offset": self.dark_offset,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class RawFourPhase:
    """Frame-averaged tap intensities with shape ``(..., L, 4)``.

    The last axis holds the 0, 90, 180 and 270 degree taps.
    """

    taps: np.ndarray
    darks: Optional[np.ndarray]
    n_frames: int = 1
    subtracted: bool = False

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim < 2 or taps.shape[-1] != 4:
            raise ValueError("taps must have shape (..., L, 4)")
        if not np.all(np.isfinite(taps)):
            raise ValueError("tap intensities must be finite")
        if self.darks is not None and np.shape(self.darks) != taps.shape:
            raise ValueError("dark frames must match tap frames")
        if self.n_frames < 1:
            raise ValueError("n_frames must be at least 1")
        object.__setattr__(self, "taps", taps)


def pixel_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, pixel index); serial and parallel runs agree."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sparse_vector(scene_pixel: PathList, grid: DepthGrid) -> np.ndarray:
    """Ground-truth backscatter vector with each path placed at its nearest bin."""
    g = np.zeros(grid.n_bins)
    for depth, amp in scene_pixel:
        if amp < 0:
            raise ValueError("path amplitudes must be nonnegative")
        g[grid.nearest_bin(depth)] += amp
    return g


def synthesize_observation(scene_pixel: PathList, A_true: SensingMatrix,
                           noise: Optional[NoiseModel] = None,
                           rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """``c = A g + eps`` for unit-norm atoms ``A`` and nearest-bin ``g``.

    ``eps`` is complex Gaussian with standard deviation ``read_noise_sigma`` on
    each of the real and imaginary parts.
    """
    g = sparse_vector(scene_pixel, A_true.grid)
    c = A_true.entries @ g
    sigma = noise.read_noise_sigma if noise is not None else 0.0
    if sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(noise.seed)
        c = c + sigma * (rng.standard_normal(c.shape) + 1j * rng.standard_normal(c.shape))
    return c


def _signal_taps(ranges: np.ndarray, amps: np.ndarray, plan: ModulationPlan,
                 model: AtomModel) -> np.ndarray:
    """Noise-free taps ``(..., L, 4)`` for paths given as ``(..., P)`` ranges/amplitudes."""
    psi = plan.delay_phase(ranges)[..., None, None, :]  # (..., 1, 1, P)
    ref = plan.phases[:, None, None] + np.asarray(TAP_OFFSETS)[None, :, None]  # (L, 4, 1)
    resp = tap_intensity(psi, ref, plan, model)
    return np.sum(resp * amps[..., None, None, :], axis=-1)


def _capture(signal: np.ndarray, noise: NoiseModel, n_frames: int,
             rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Average ``n_frames`` noisy captures of ``signal`` and of a TX-off baseline."""
    base = signal + noise.dark_offset
    if noise.read_noise_sigma == 0 and not noise.shot_noise:
        return base.copy(), np.full_like(signal, noise.dark_offset)
    frames = np.broadcast_to(base, (n_frames,) + base.shape)
    darks = np.full((n_frames,) + base.shape, noise.dark_offset)
    # taps first, then darks: fixed draw order keeps output reproducible
    frames = frames + noise.read_noise_sigma * rng.standard_normal(frames.shape)
    darks = darks + noise.read_noise_sigma * rng.standard_normal(darks.shape)
    if noise.shot_noise:
        frames = frames + np.sqrt(noise.shot_gain * np.maximum(base, 0.0)) * rng.standard_normal(frames.shape)
        darks = darks + np.sqrt(noise.shot_gain * noise.dark_offset) * rng.standard_normal(darks.shape)
    return frames.mean(axis=0), darks.mean(axis=0)


def render_four_phase(scene_pixel: PathList, plan: ModulationPlan,
                      pixel: Optional[Tuple[float, float]] = None,
                      intrinsics: Optional[CameraIntrinsics] = None,
                      noise: Optional[NoiseModel] = None, n_frames: int = 100,
                      model: AtomModel = AtomModel.DUTY_CYCLE,
                      rng: Optional[np.random.Generator] = None) -> RawFourPhase:
    """Simulate the frame-averaged four-phase taps of one pixel.

    Each tap is the correlation of the emitted waveform with the delayed,
    amplitude-weighted sum of path returns, plus the dark offset and per-frame
    noise.  Matching TX-off frames are captured with independent noise.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be at least 1")
    noise = noise if noise is not None else NoiseModel()
    depths = np.array([p[0] for p in scene_pixel], dtype=float)
    amps = np.array([p[1] for p in scene_pixel], dtype=float)
    if np.any(amps < 0):
        raise ValueError("path amplitudes must be nonnegative")
    if pixel is not None:
        x, y = normalized_coords(pixel[0], pixel[1], intrinsics)
        ranges = corrected_range(depths, x, y) if depths.size else depths
    else:
        ranges = depths
    signal = _signal_taps(np.atleast_1d(ranges), amps, plan, model)
    rng = rng if rng is not None else np.random.default_rng(noise.seed)
    taps, darks = _capture(signal, noise, n_frames, rng)
    return RawFourPhase(taps, darks, n_frames)


def render_scene(scene: MultipathScene, plan: ModulationPlan,
                 intrinsics: Optional[CameraIntrinsics] = None,
                 noise: Optional[NoiseModel] = None, n_frames: int = 100,
                 model: AtomModel = AtomModel.DUTY_CYCLE) -> RawFourPhase:
    """Render every pixel of ``scene``; pixel ``(v, u)`` draws noise from stream ``v*W + u``."""
    noise = noise if noise is not None else NoiseModel()
    H, W = scene.shape
    if intrinsics is not None:
        if (intrinsics.height, intrinsics.width) != (H, W):
            raise ValueError("scene size does not match the camera intrinsics")
        vv, uu = np.mgrid[0:H, 0:W]
        x, y = normalized_coords(uu, vv, intrinsics)
        ranges = scene.depths * np.sqrt(1.0 + x ** 2 + y ** 2)[..., None]
    else:
        ranges = scene.depths
    signal = _signal_taps(ranges, scene.amplitudes, plan, model)
    taps = np.empty_like(signal)
    darks = np.empty_like(signal)
    for v in range(H):
        for u in range(W):
            rng = pixel_rng(noise.seed, v * W + u)
            taps[v, u], darks[v, u] = _capture(signal[v, u], noise, n_frames, rng)
    return RawFourPhase(taps, darks, n_frames)


def baseline_subtract(raw: RawFourPhase) -> RawFourPhase:
    """Remove the TX-off baseline frame-wise; the returned dark frames are zero."""
    if raw.darks is None:
        raise ValueError("baseline subtraction needs dark frames")
    darks = np.asarray(raw.darks, dtype=float)
    return RawFourPhase(raw.taps - darks, np.zeros_like(darks), raw.n_frames, subtracted=True)


def to_complex_observation(raw: RawFourPhase) -> np.ndarray:
    """``c_m = (I_0 - I_180) + j (I_90 - I_270)`` for each phase configuration."""
    if not raw.subtracted:
        raise ValueError("observation must be baseline-subtracted first")
    t = raw.taps
    return (t[..., 0] - t[..., 2]) + 1j * (t[..., 1] - t[..., 3])


def emulate_calibration(grid: DepthGrid, plan: ModulationPlan,
                        pixel: Optional[Tuple[float, float]] = None,
                        intrinsics: Optional[CameraIntrinsics] = None,
                        noise: Optional[NoiseModel] = None, n_frames: int = 100,
                        model: AtomModel = AtomModel.DUTY_CYCLE) -> SensingMatrix:
    """Build a sensing matrix by scanning a unit target through every grid depth.

    Each position is rendered, baseline-subtracted and reduced to its complex
    observation; position ``i`` draws noise from stream ``(seed, i)``.
    """
    noise = noise if noise is not None else NoiseModel.noiseless()
    depths = grid.depths
    if pixel is not None:
        x, y = normalized_coords(pixel[0], pixel[1], intrinsics)
        ranges = corrected_range(depths, x, y)
    else:
        ranges = depths
    if np.max(ranges) > plan.unambiguous_range:
        raise ValueError("calibration scan exceeds the unambiguous range")
    signal = _signal_taps(ranges[:, None], np.ones((grid.n_bins, 1)), plan, model)
    columns = np.empty((plan.n_phases, grid.n_bins), dtype=complex)
    for i in range(grid.n_bins):
        taps, darks = _capture(signal[i], noise, n_frames, pixel_rng(noise.seed, i))
        raw = baseline_subtract(RawFourPhase(taps, darks, n_frames))
        columns[:, i] = to_complex_observation(raw)
    return matrix_from_columns(columns, grid, plan, model,
                               pixel if pixel is not None else None,
                               intrinsics if pixel is not None else None)


def with_seed(noise: NoiseModel, seed: int) -> NoiseModel:
    return replace(noise, seed=int(seed))
