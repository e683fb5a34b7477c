"""Canonical multipath scenes and their JSON description."""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from .io import atomic_write_text
from .sensing import CameraIntrinsics
from .simulator import MultipathScene


def default_intrinsics(width: int = 32, height: int = 24, fov_scale: float = 0.75) -> CameraIntrinsics:
    """Small pinhole camera; ``fov_scale`` sets the focal length as a fraction of the width."""
    f = fov_scale * width
    return CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


def _grid(intrinsics: CameraIntrinsics):
    vv, uu = np.mgrid[0:intrinsics.height, 0:intrinsics.width]
    x = (uu - intrinsics.cx) / intrinsics.fx
    y = (vv - intrinsics.cy) / intrinsics.fy
    return x, y


def plane_scene(intrinsics: CameraIntrinsics, depth: float = 700.0) -> MultipathScene:
    """Fronto-parallel plane, one path per pixel."""
    shape = (intrinsics.height, intrinsics.width, 1)
    return MultipathScene(np.full(shape, depth), np.ones(shape), "plane", {"depth": depth})


def two_path_scene(intrinsics: CameraIntrinsics, depth: float = 600.0,
                   separation: float = 200.0, ratio: float = 0.4) -> MultipathScene:
    """Plane at ``depth`` plus an interference path ``separation`` mm behind it."""
    H, W = intrinsics.height, intrinsics.width
    depths = np.stack([np.full((H, W), depth), np.full((H, W), depth + separation)], axis=-1)
    amps = np.stack([np.ones((H, W)), np.full((H, W), ratio)], axis=-1)
    return MultipathScene(depths, amps, "two-path",
                          {"depth": depth, "separation": separation, "ratio": ratio})


def corner_scene(intrinsics: CameraIntrinsics, apex: float = 800.0,
                 ratio: float = 0.3) -> MultipathScene:
    """Concave 90 degree corner with a horizontal crease at ``apex`` mm on the optical axis.

    The faces are ``Z + |Y| = apex``.  Each point also receives light that
    bounced off the mirror point on the opposite face; for a right-angle corner
    the extra one-way length is ``|Y|``, so the second path has axial-equivalent
    depth ``Z + |Y| / sqrt(1 + x^2 + y^2)`` and amplitude ``ratio``.
    """
    x, y = _grid(intrinsics)
    Z = apex / (1.0 + np.abs(y))
    second = Z + np.abs(y) * Z / np.sqrt(1.0 + x ** 2 + y ** 2)
    depths = np.stack([Z, second], axis=-1)
    amps = np.stack([np.ones_like(Z), np.full_like(Z, ratio)], axis=-1)
    return MultipathScene(depths, amps, "corner", {"apex": apex, "ratio": ratio})


def glass_scene(intrinsics: CameraIntrinsics, glass: float = 500.0, wall: float = 900.0,
                ratio: float = 0.5) -> MultipathScene:
    """Pane of glass in front of a wall: strong near return plus attenuated wall."""
    H, W = intrinsics.height, intrinsics.width
    depths = np.stack([np.full((H, W), glass), np.full((H, W), wall)], axis=-1)
    amps = np.stack([np.ones((H, W)), np.full((H, W), ratio)], axis=-1)
    return MultipathScene(depths, amps, "glass", {"glass": glass, "wall": wall, "ratio": ratio})


SCENES = {
    "plane": plane_scene,
    "two-path": two_path_scene,
    "corner": corner_scene,
    "glass": glass_scene,
}


def make_scene(label: str, intrinsics: CameraIntrinsics, params: Optional[dict] = None) -> MultipathScene:
    try:
        builder = SCENES[label]
    except KeyError:
        raise ValueError(f"unknown scene {label!r}; choose from {sorted(SCENES)}") from None
    return builder(intrinsics, **(params or {}))


def corner_faces(scene: MultipathScene, intrinsics: CameraIntrinsics):
    """Boolean masks of the upper and lower faces (the crease row is excluded)."""
    _, y = _grid(intrinsics)
    return y < 0, y > 0


def scene_to_dict(scene: MultipathScene) -> dict:
    return {
        "label": scene.label,
        "params": scene.params,
        "shape": list(scene.depths.shape),
        "depths": scene.depths.tolist(),
        "amplitudes": scene.amplitudes.tolist(),
    }


def scene_from_dict(data: dict) -> MultipathScene:
    return MultipathScene(np.asarray(data["depths"], dtype=float),
                          np.asarray(data["amplitudes"], dtype=float),
                          data.get("label", ""), dict(data.get("params", {})))


def save_scene(scene: MultipathScene, path, **extra) -> None:
    atomic_write_text(path, json.dumps({**scene_to_dict(scene), **extra}, sort_keys=True))


def load_scene(path) -> MultipathScene:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))
