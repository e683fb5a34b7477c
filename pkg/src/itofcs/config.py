"""Experiment configuration: JSON in, typed objects out, plus a stable hash."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from .sensing import AtomModel, CameraIntrinsics, DepthGrid, ModulationPlan, default_phase_shifts
from .scenes import default_intrinsics
from .simulator import NoiseModel

METHODS = ("cc_omp", "omp_full", "cosamp", "fista", "naive", "naive_single")


class ConfigError(ValueError):
    pass


DEFAULT_SOLVER = {
    "method": "cc_omp",
    "k_clusters": 8,
    "k_sparse": 3,
    "residual_tol": 1e-3,
    "k_top": 3,
    "window": 3,
    "margin": 2,
    "strict": False,
    "real": True,
    "refine": True,
    "lam": None,
    "lam_ratio": 0.05,
    "fista_max_iter": 300,
    "cosamp_max_iter": 50,
    "seed": 0,
}

DEFAULTS = {
    "grid": {"d_min": 300.0, "d_max": 1300.0, "step": 1.0},
    "plan": {"f_mod": 100e6, "n_phases": 20, "duty_cycle": 0.05},
    "camera": {"width": 32, "height": 24, "fov_scale": 0.75},
    "scene": {"label": "two-path", "params": {}},
    "noise": {"read_noise_sigma": 0.01, "shot_noise": False, "shot_gain": 1e-4,
              "dark_offset": 0.05},
    "n_frames": 100,
    "atom_model": AtomModel.DUTY_CYCLE.value,
    "solver": DEFAULT_SOLVER,
    "seed": 0,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        unknown = set(self.data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        unknown = set(self.data["solver"]) - set(DEFAULT_SOLVER)
        if unknown:
            raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
        if self.data["solver"]["method"] not in METHODS:
            raise ConfigError(f"unknown method {self.data['solver']['method']!r}")
        try:
            self.grid, self.plan, self.intrinsics, self.noise
            AtomModel(self.data["atom_model"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        if int(self.data["n_frames"]) < 1:
            raise ConfigError("n_frames must be at least 1")

    @classmethod
    def from_dict(cls, data: Optional[dict] = None) -> "ExperimentConfig":
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls(_merge(DEFAULTS, data or {}))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        if seed is None:
            return self
        data = copy.deepcopy(self.data)
        data["seed"] = int(seed)
        return ExperimentConfig(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @property
    def grid(self) -> DepthGrid:
        return DepthGrid(**self.data["grid"])

    @property
    def plan(self) -> ModulationPlan:
        p = dict(self.data["plan"])
        if "phase_shifts" in p:
            p.pop("n_phases", None)
            p.pop("span", None)
            return ModulationPlan(**p)
        phases = default_phase_shifts(int(p.pop("n_phases", 20)), *(
            [float(p.pop("span"))] if "span" in p else []))
        return ModulationPlan(phase_shifts=tuple(phases.tolist()), **p)

    @property
    def intrinsics(self) -> CameraIntrinsics:
        cam = dict(self.data["camera"])
        if "fx" in cam:
            cam.pop("fov_scale", None)
            return CameraIntrinsics(**cam)
        return default_intrinsics(int(cam["width"]), int(cam["height"]), float(cam["fov_scale"]))

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(seed=int(self.data["seed"]), **self.data["noise"])

    @property
    def atom_model(self) -> AtomModel:
        return AtomModel(self.data["atom_model"])

    @property
    def solver(self) -> dict:
        return copy.deepcopy(self.data["solver"])

    @property
    def n_frames(self) -> int:
        return int(self.data["n_frames"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])
