"""Artifact files: float32 rasters with JSON sidecars, atomic writes, manifests."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_raster(path, array: np.ndarray) -> None:
    atomic_write_bytes(path, np.ascontiguousarray(array, dtype="<f4").tobytes())


def read_raster(path, shape) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} values, found {data.size}")
    return data.reshape(shape).astype(float)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_manifest(out_dir) -> dict:
    path = Path(out_dir) / MANIFEST
    if not path.exists():
        return {}
    return read_json(path)


def update_manifest(out_dir, config, names) -> dict:
    """Record ``names`` (files in ``out_dir``) under the config's hash.

    Entries are keyed by file name and hold the file digest and the hash of
    the config that produced it; nothing time- or host-dependent is stored, so
    identical runs give identical manifests.
    """
    out_dir = Path(out_dir)
    manifest = load_manifest(out_dir)
    if manifest and manifest.get("config_hash") != config.hash:
        manifest = {}  # a different experiment owned this directory before
    manifest["config_hash"] = config.hash
    manifest["config"] = config.to_dict()
    arts = manifest.setdefault("artifacts", {})
    for name in names:
        p = out_dir / name
        arts[name] = {"sha256": sha256_file(p), "bytes": p.stat().st_size,
                      "config_hash": config.hash}
    write_json(out_dir / MANIFEST, manifest)
    return manifest


def check_artifacts(out_dir, config, names) -> None:
    """Raise if any named artifact is missing, altered, or from another config."""
    manifest = load_manifest(out_dir)
    arts = manifest.get("artifacts", {})
    for name in names:
        entry = arts.get(name)
        if entry is None or not (Path(out_dir) / name).exists():
            raise FileNotFoundError(f"missing artifact {name} in {out_dir}")
        if entry["config_hash"] != config.hash:
            raise HashMismatch(f"{name} was produced by config {entry['config_hash'][:12]}, "
                               f"not {config.hash[:12]}")
        if sha256_file(Path(out_dir) / name) != entry["sha256"]:
            raise HashMismatch(f"{name} changed since it was written")


class HashMismatch(RuntimeError):
    pass
