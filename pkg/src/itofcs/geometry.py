"""Radial/axial conversion, pinhole back-projection and point-cloud export."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .io import atomic_write_text
from .metrics import DepthMap
from .sensing import CameraIntrinsics, normalized_coords


def radial_to_axial(r, x, y):
    """Inverse of the path-elongation correction: ``r / sqrt(1 + x^2 + y^2)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("range must be positive")
    d = r / np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2)
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray                    # (N, 3) X, Y, Z in mm, camera frame
    pixels: Optional[np.ndarray] = None   # (N, 2) source (u, v)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if np.any(pts[:, 2] <= 0):
            raise ValueError("points must lie in front of the camera")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def pixel_grid(intrinsics: CameraIntrinsics):
    """Normalized coordinates ``(x, y)`` of every pixel, each ``(H, W)``."""
    vv, uu = np.mgrid[0:intrinsics.height, 0:intrinsics.width]
    return normalized_coords(uu, vv, intrinsics)


def backproject(depth: DepthMap, intrinsics: CameraIntrinsics) -> PointCloud:
    """Pinhole back-projection of an axial depth map: ``(x d, y d, d)`` per valid pixel."""
    if (depth.height, depth.width) != (intrinsics.height, intrinsics.width):
        raise ValueError("depth map size does not match the camera")
    if not depth.mask.any():
        raise ValueError("depth map has no valid pixels")
    x, y = pixel_grid(intrinsics)
    v, u = np.nonzero(depth.mask)
    d = depth.values[v, u]
    pts = np.column_stack([x[v, u] * d, y[v, u] * d, d])
    return PointCloud(pts, np.column_stack([u, v]))


def project(points: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates ``(u, v)`` of camera-frame points."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    u = intrinsics.fx * p[:, 0] / p[:, 2] + intrinsics.cx
    v = intrinsics.fy * p[:, 1] / p[:, 2] + intrinsics.cy
    return np.column_stack([u, v])


def fit_plane(points: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Least-squares plane ``n . p = offset``; returns ``(unit normal, offset, rms residual)``."""
    p = np.asarray(points, dtype=float)
    centroid = p.mean(axis=0)
    _, s, vt = np.linalg.svd(p - centroid, full_matrices=False)
    normal = vt[-1]
    return normal, float(normal @ centroid), float(s[-1] / np.sqrt(len(p)))


def dihedral_angle(n1: np.ndarray, n2: np.ndarray) -> float:
    """Angle between two planes in degrees, in [0, 90]."""
    cos = abs(float(np.dot(n1, n2))) / (np.linalg.norm(n1) * np.linalg.norm(n2))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def ply_text(cloud: PointCloud) -> str:
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property float x", "property float y", "property float z", "end_header"]
    # 9 significant digits round-trip float32 exactly
    lines += [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in cloud.points.astype(np.float32)]
    return "\n".join(lines) + "\n"


def cloud_csv_text(cloud: PointCloud) -> str:
    if cloud.pixels is None:
        rows = ["x,y,z"] + [f"{x:.6f},{y:.6f},{z:.6f}" for x, y, z in cloud.points]
    else:
        rows = ["u,v,x,y,z"] + [f"{int(u)},{int(v)},{x:.6f},{y:.6f},{z:.6f}"
                                for (u, v), (x, y, z) in zip(cloud.pixels, cloud.points)]
    return "\n".join(rows) + "\n"


def write_ply(cloud: PointCloud, path) -> None:
    atomic_write_text(path, ply_text(cloud))


def write_csv(cloud: PointCloud, path) -> None:
    atomic_write_text(path, cloud_csv_text(cloud))


def read_ply(path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().splitlines()
    end = lines.index("end_header")
    return np.array([[float(t) for t in ln.split()] for ln in lines[end + 1:] if ln.strip()])
