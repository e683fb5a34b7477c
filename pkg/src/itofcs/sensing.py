"""Sensing-matrix construction for a single-frequency, multi-phase iToF camera.

Rows of a sensing matrix are reference-phase configurations, columns are
distance bins.  Each column is the complex four-tap response

    (C(0) - C(pi)) + j (C(pi/2) - C(3pi/2))

of one bin, where ``C(theta)`` is the tap intensity measured with the
demodulation reference shifted by ``phi_m + theta``.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .io import atomic_write_bytes, atomic_write_text

C_LIGHT = 299_792_458.0  # m/s
TAP_OFFSETS = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)

MATRIX_MAGIC = b"ITOFSM\x00\x00"
MATRIX_VERSION = 1


class AtomModel(str, enum.Enum):
    IDEAL_SINUSOID = "IdealSinusoid"
    DUTY_CYCLE = "DutyCycleCorrelation"


@dataclass(frozen=True)
class DepthGrid:
    """Uniform distance bins ``d_i = d_min + i * step`` in millimetres."""

    d_min: float
    d_max: float
    step: float

    def __post_init__(self):
        if not (self.d_min > 0 and self.step > 0 and self.d_max > self.d_min):
            raise ValueError(
                f"invalid depth grid: d_min={self.d_min}, d_max={self.d_max}, step={self.step}"
            )

    @property
    def n_bins(self) -> int:
        return int(math.floor((self.d_max - self.d_min) / self.step + 1e-9)) + 1

    @property
    def depths(self) -> np.ndarray:
        return self.d_min + self.step * np.arange(self.n_bins)

    @property
    def span(self) -> float:
        return self.d_max - self.d_min

    def nearest_bin(self, depth: float) -> int:
        """Index of the bin closest to ``depth``; raises if outside the grid."""
        half = 0.5 * self.step
        last = self.d_min + (self.n_bins - 1) * self.step
        if depth < self.d_min - half or depth > last + half:
            raise ValueError(f"depth {depth} mm outside grid [{self.d_min}, {last}]")
        return int(min(self.n_bins - 1, max(0, round((depth - self.d_min) / self.step))))

    def to_dict(self) -> dict:
        return {"d_min": self.d_min, "d_max": self.d_max, "step": self.step}


def default_phase_shifts(n_phases: int = 20, span: float = 0.5 * math.pi) -> np.ndarray:
    # The quadrature taps already sample phi + {0, pi/2, pi, 3pi/2}; spreading the
    # configurations over [0, pi/2) makes all 4*L tap offsets distinct.
    return span * np.arange(n_phases) / n_phases


@dataclass(frozen=True, eq=False)
class ModulationPlan:
    f_mod: float = 100e6
    phase_shifts: Tuple[float, ...] = field(
        default_factory=lambda: tuple(default_phase_shifts().tolist())
    )
    duty_cycle: float = 0.05

    def __post_init__(self):
        phases = np.asarray(self.phase_shifts, dtype=float)
        object.__setattr__(self, "phase_shifts", tuple(float(p) for p in phases))
        if self.f_mod <= 0:
            raise ValueError("f_mod must be positive")
        if phases.ndim != 1 or phases.size < 2:
            raise ValueError("need at least two phase shifts")
        if np.any(np.diff(phases) <= 0) or phases[0] < 0 or phases[-1] >= 2 * math.pi:
            raise ValueError("phase shifts must be strictly increasing in [0, 2pi)")
        if not 0 < self.duty_cycle <= 1:
            raise ValueError("duty_cycle must lie in (0, 1]")

    @classmethod
    def uniform(cls, n_phases: int = 20, span: float = 0.5 * math.pi, **kw) -> "ModulationPlan":
        return cls(phase_shifts=tuple(default_phase_shifts(n_phases, span).tolist()), **kw)

    @property
    def tap_offsets(self) -> Tuple[float, ...]:
        return TAP_OFFSETS

    @property
    def n_phases(self) -> int:
        return len(self.phase_shifts)

    @property
    def phases(self) -> np.ndarray:
        return np.asarray(self.phase_shifts)

    @property
    def unambiguous_range(self) -> float:
        """c / (2 f) in millimetres."""
        return C_LIGHT / (2.0 * self.f_mod) * 1e3

    def delay_phase(self, range_mm):
        """Round-trip modulation phase 2*pi*f*tau for a one-way path length in mm."""
        return 4.0 * math.pi * self.f_mod * np.asarray(range_mm, dtype=float) * 1e-3 / C_LIGHT

    def to_dict(self) -> dict:
        return {
            "f_mod": self.f_mod,
            "phase_shifts": list(self.phase_shifts),
            "duty_cycle": self.duty_cycle,
        }

    def __eq__(self, other):
        if not isinstance(other, ModulationPlan):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.f_mod, self.phase_shifts, self.duty_cycle))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the sensor")

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }


def normalized_coords(u, v, intrinsics: CameraIntrinsics):
    """Pixel -> normalized image-plane coordinates ``((u-cx)/fx, (v-cy)/fy)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < 0) | (u > intrinsics.width - 1) | (v < 0) | (v > intrinsics.height - 1)):
        raise ValueError(f"pixel ({u}, {v}) outside the {intrinsics.width}x{intrinsics.height} sensor")
    x = (u - intrinsics.cx) / intrinsics.fx
    y = (v - intrinsics.cy) / intrinsics.fy
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def corrected_range(d, x, y):
    """Path length along the pixel ray for axial depth ``d``: ``d * sqrt(1 + x^2 + y^2)``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("axial depth must be positive")
    r = d * np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2)
    return float(r) if r.ndim == 0 else r


def duty_cycle_correlation(u, duty: float, samples: Optional[int] = None):
    """Circular autocorrelation of a rectangular pulse train.

    ``u`` is the lag in periods.  The result is the overlap fraction divided by
    ``duty`` so that the zero-lag peak is 1.  With ``samples`` given, the
    correlation is evaluated on that many samples per period instead of in
    closed form.
    """
    u = np.mod(np.asarray(u, dtype=float), 1.0)
    if samples is None:
        overlap = np.maximum(0.0, duty - u) + np.maximum(0.0, u + duty - 1.0)
        return overlap / duty
    t = np.arange(samples) / samples
    on = (t < duty).astype(float)
    shifted = (np.mod(t[None, :] - u.reshape(-1, 1), 1.0) < duty).astype(float)
    out = shifted @ on / samples / duty
    return out.reshape(u.shape)


def tap_intensity(delay_phase, ref_phase, plan: ModulationPlan,
                  model: AtomModel = AtomModel.DUTY_CYCLE, samples: Optional[int] = None):
    """Noise-free tap intensity for a unit-amplitude return, broadcasting over inputs."""
    lag = np.asarray(delay_phase, dtype=float) - np.asarray(ref_phase, dtype=float)
    if AtomModel(model) is AtomModel.IDEAL_SINUSOID:
        return 0.5 * (1.0 + np.cos(lag))
    return duty_cycle_correlation(lag / (2 * math.pi), plan.duty_cycle, samples)


def four_tap_response(delay_phase, plan: ModulationPlan,
                      model: AtomModel = AtomModel.DUTY_CYCLE, samples: Optional[int] = None):
    """Complex response, shape ``(L, *delay_phase.shape)``, of unit returns at the given phases."""
    psi = np.asarray(delay_phase, dtype=float)
    ref = plan.phases.reshape((-1,) + (1,) * psi.ndim)
    taps = [tap_intensity(psi, ref + th, plan, model, samples) for th in TAP_OFFSETS]
    return (taps[0] - taps[2]) + 1j * (taps[1] - taps[3])


def normalize_columns(entries: np.ndarray):
    """Return ``(unit-column matrix, column norms)``; zero columns are rejected.

    Norms at or below ``1e-12`` count as zero: they only arise from exact
    cancellation, e.g. a constant emission waveform.
    """
    entries = np.asarray(entries)
    norms = np.linalg.norm(entries, axis=0)
    if np.any(norms <= 1e-12):
        raise ValueError("sensing matrix has a zero column")
    return entries / norms, norms


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    entries: np.ndarray
    grid: DepthGrid
    plan: ModulationPlan
    atom_model: AtomModel
    column_norms: np.ndarray
    pixel: Optional[Tuple[float, float]] = None
    intrinsics: Optional[CameraIntrinsics] = None

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        norms = np.array(self.column_norms, dtype=float)
        if entries.shape != (self.plan.n_phases, self.grid.n_bins):
            raise ValueError(
                f"entries shape {entries.shape} does not match "
                f"({self.plan.n_phases}, {self.grid.n_bins})"
            )
        entries.flags.writeable = False
        norms.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "column_norms", norms)
        object.__setattr__(self, "atom_model", AtomModel(self.atom_model))

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n_bins(self) -> int:
        return self.entries.shape[1]

    @property
    def raw(self) -> np.ndarray:
        """Columns rescaled back to their pre-normalization norms."""
        return self.entries * self.column_norms

    def real_stacked(self) -> np.ndarray:
        """The ``2L x n`` real matrix ``[Re A; Im A]``."""
        return np.vstack([self.entries.real, self.entries.imag])

    def metadata(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "plan": self.plan.to_dict(),
            "atom_model": self.atom_model.value,
            "pixel": list(self.pixel) if self.pixel is not None else None,
            "intrinsics": self.intrinsics.to_dict() if self.intrinsics else None,
            "column_norms": self.column_norms.tolist(),
        }


def build_sensing_matrix(grid: DepthGrid, plan: ModulationPlan,
                         pixel: Optional[Tuple[float, float]] = None,
                         intrinsics: Optional[CameraIntrinsics] = None,
                         atom_model: AtomModel = AtomModel.DUTY_CYCLE,
                         samples: Optional[int] = None) -> SensingMatrix:
    """Analytic sensing matrix for ``grid`` under ``plan``.

    When ``pixel`` (with ``intrinsics``) is given, each bin's axial depth is
    converted to the path length along that pixel's ray before computing the
    delay, so the columns stay indexed by axial depth.
    """
    depths = grid.depths
    if pixel is not None:
        if intrinsics is None:
            raise ValueError("pixel correction needs camera intrinsics")
        x, y = normalized_coords(pixel[0], pixel[1], intrinsics)
        ranges = corrected_range(depths, x, y)
        pixel = (float(pixel[0]), float(pixel[1]))
    else:
        ranges = depths
    if np.max(ranges) > plan.unambiguous_range:
        raise ValueError(
            f"grid reaches {np.max(ranges):.1f} mm, beyond the unambiguous range "
            f"{plan.unambiguous_range:.1f} mm"
        )
    psi = plan.delay_phase(ranges)
    model = AtomModel(atom_model)
    if model is AtomModel.IDEAL_SINUSOID:
        raw = np.exp(1j * (psi[None, :] - plan.phases[:, None]))
    else:
        raw = four_tap_response(psi, plan, model, samples)
    entries, norms = normalize_columns(raw)
    return SensingMatrix(entries, grid, plan, model, norms, pixel,
                         intrinsics if pixel is not None else None)


def mutual_coherence(A, real: bool = False) -> float:
    """Largest ``|<a_i, a_k>|`` over distinct columns of a column-normalized matrix.

    With ``real=True`` the columns are compared as ``[Re; Im]`` real vectors,
    which is the geometry seen by the real-coefficient solvers.
    """
    M = A.entries if isinstance(A, SensingMatrix) else np.asarray(A)
    if M.ndim != 2 or M.shape[1] < 2:
        raise ValueError("mutual coherence needs at least two columns")
    if real:
        M = np.vstack([M.real, M.imag])
    G = np.abs(M.conj().T @ M)
    np.fill_diagonal(G, 0.0)
    return float(G.max())


def matrix_to_bytes(A: SensingMatrix) -> bytes:
    """Binary container: 16-byte header, JSON metadata, shape, interleaved float64 (re, im)."""
    meta = json.dumps(A.metadata(), sort_keys=True).encode("utf-8")
    header = MATRIX_MAGIC + struct.pack("<II", MATRIX_VERSION, len(meta))
    body = np.ascontiguousarray(A.entries).view(np.float64)  # row-major re, im pairs
    return header + meta + struct.pack("<II", *A.entries.shape) + body.astype("<f8").tobytes()


def save_matrix(A: SensingMatrix, path) -> None:
    atomic_write_bytes(path, matrix_to_bytes(A))


def load_matrix(path) -> SensingMatrix:
    data = Path(path).read_bytes()
    if data[:8] != MATRIX_MAGIC:
        raise ValueError(f"{path}: not a sensing-matrix file")
    version, meta_len = struct.unpack("<II", data[8:16])
    if version != MATRIX_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    meta = json.loads(data[16:16 + meta_len].decode("utf-8"))
    pos = 16 + meta_len
    rows, cols = struct.unpack("<II", data[pos:pos + 8])
    flat = np.frombuffer(data[pos + 8:], dtype="<f8")
    if flat.size != 2 * rows * cols:
        raise ValueError(f"{path}: truncated matrix payload")
    entries = flat.view(np.complex128).reshape(rows, cols)
    plan = ModulationPlan(**meta["plan"])
    intr = CameraIntrinsics(**meta["intrinsics"]) if meta["intrinsics"] else None
    pixel = tuple(meta["pixel"]) if meta["pixel"] is not None else None
    return SensingMatrix(entries, DepthGrid(**meta["grid"]), plan, AtomModel(meta["atom_model"]),
                         np.asarray(meta["column_norms"]), pixel, intr)


def matrix_csv(A: SensingMatrix) -> str:
    """Debug dump, one ``row,col,re,im`` line per entry."""
    rows, cols = np.indices(A.shape)
    lines = ["row,col,re,im"]
    for r, c, z in zip(rows.ravel(), cols.ravel(), A.entries.ravel()):
        lines.append(f"{r},{c},{float(z.real)!r},{float(z.imag)!r}")
    return "\n".join(lines) + "\n"


def export_matrix_csv(A: SensingMatrix, path) -> None:
    atomic_write_text(path, matrix_csv(A))


def matrix_from_columns(columns: np.ndarray, grid: DepthGrid, plan: ModulationPlan,
                        atom_model: AtomModel = AtomModel.DUTY_CYCLE,
                        pixel: Optional[Sequence[float]] = None,
                        intrinsics: Optional[CameraIntrinsics] = None) -> SensingMatrix:
    """Wrap measured (unnormalized) columns as a normalized sensing matrix."""
    entries, norms = normalize_columns(columns)
    return SensingMatrix(entries, grid, plan, atom_model, norms,
                         tuple(pixel) if pixel is not None else None, intrinsics)
