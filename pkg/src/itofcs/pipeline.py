"""End-to-end experiment steps shared by the CLI and the tests."""

from __future__ import annotations

import io as _io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import io
from .config import METHODS, ExperimentConfig
from .geometry import PointCloud, backproject, pixel_grid, radial_to_axial, write_csv, write_ply
from .metrics import DepthMap, MetricsReport, evaluate, reports_to_json
from .recovery.baselines import cosamp, fista
from .recovery.clustering import ClusteredDictionary, cluster_dictionary
from .recovery.depth import extract_depth_index, naive_four_phase_depth, naive_fused_depth
from .recovery.pursuit import SparseSolution, cc_omp, omp, refine_adjacent
from .scenes import make_scene, scene_to_dict
from .sensing import (
    SensingMatrix,
    build_sensing_matrix,
    load_matrix,
    matrix_csv,
    matrix_to_bytes,
    mutual_coherence,
)
from .simulator import (
    MultipathScene,
    RawFourPhase,
    baseline_subtract,
    emulate_calibration,
    render_scene,
    to_complex_observation,
)

SIM_FILES = ("scene.json", "taps.f32", "darks.f32", "raw.json", "truth_depth.f32")
MATRIX_FILE = "matrix.itsm"


@dataclass
class Simulation:
    scene: MultipathScene
    raw: RawFourPhase
    truth: DepthMap


def simulate(cfg: ExperimentConfig) -> Simulation:
    intr = cfg.intrinsics
    scene = make_scene(cfg.data["scene"]["label"], intr, cfg.data["scene"].get("params"))
    scene.check_grid(cfg.grid)
    raw = render_scene(scene, cfg.plan, intr, cfg.noise, cfg.n_frames, cfg.atom_model)
    return Simulation(scene, raw, DepthMap(scene.primary_depth()))


def analytic_matrix(cfg: ExperimentConfig) -> SensingMatrix:
    """On-axis dictionary; its bins are radial ranges."""
    return build_sensing_matrix(cfg.grid, cfg.plan, atom_model=cfg.atom_model)


# one dictionary per worker process, installed by the pool initializer
_WORKER: dict = {}


def _init_worker(A: SensingMatrix, dictionary: Optional[ClusteredDictionary], solver: dict):
    _WORKER.update(A=A, dictionary=dictionary, solver=solver)


def solve_pixel(c: np.ndarray, method: str, A: SensingMatrix,
                dictionary: Optional[ClusteredDictionary], solver: dict) -> SparseSolution:
    real = solver["real"]
    if method == "cc_omp":
        sol = cc_omp(c, dictionary, solver["k_sparse"], solver["residual_tol"], real,
                     solver["margin"], solver["strict"])
    elif method == "omp_full":
        sol = omp(c, A, solver["k_sparse"], solver["residual_tol"], real)
    elif method == "cosamp":
        sol = cosamp(c, A, solver["k_sparse"], solver["cosamp_max_iter"], solver["residual_tol"], real)
    else:
        raise ValueError(f"no per-pixel solver for {method!r}")
    if solver["refine"]:
        sol = refine_adjacent(c, A, sol, real)
    return sol


def _solve_chunk(args) -> List[Optional[SparseSolution]]:
    method, C = args
    out = []
    for c in C:
        try:
            out.append(solve_pixel(c, method, _WORKER["A"], _WORKER["dictionary"], _WORKER["solver"]))
        except ValueError:
            out.append(None)  # zero observation: no return to decode
    return out


def solve_all(C: np.ndarray, method: str, A: SensingMatrix,
              dictionary: Optional[ClusteredDictionary], solver: dict,
              workers: int = 1) -> List[Optional[SparseSolution]]:
    """Solve every row of ``C``; results do not depend on ``workers``."""
    if method == "fista":
        live = np.flatnonzero(np.any(C != 0, axis=1))
        sols: List[Optional[SparseSolution]] = [None] * len(C)
        if live.size:
            got = fista(C[live], A, solver["lam"], solver["lam_ratio"], solver["fista_max_iter"],
                        real=solver["real"])
            for p, s in zip(live, got):
                sols[p] = s if s.support else None
        return sols
    if workers <= 1:
        _init_worker(A, dictionary, solver)
        return _solve_chunk((method, C))
    chunks = np.array_split(C, workers * 4)
    with ProcessPoolExecutor(workers, initializer=_init_worker,
                             initargs=(A, dictionary, solver)) as pool:
        parts = pool.map(_solve_chunk, [(method, ch) for ch in chunks])
        return [s for part in parts for s in part]


@dataclass
class Reconstruction:
    method: str
    depth: DepthMap                       # axial, mm
    radial: np.ndarray                    # radial range per pixel, NaN if invalid
    solutions: List[Optional[SparseSolution]]
    cloud: Optional[PointCloud]


def reconstruct(raw: RawFourPhase, cfg: ExperimentConfig, method: str,
                A: Optional[SensingMatrix] = None,
                dictionary: Optional[ClusteredDictionary] = None,
                workers: int = 1) -> Reconstruction:
    """Per pixel: subtract baseline, solve, take the Top-K centroid, convert to axial depth."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    solver = cfg.solver
    intr = cfg.intrinsics
    sub = raw if raw.subtracted else baseline_subtract(raw)
    H, W = sub.taps.shape[:2]
    x, y = pixel_grid(intr)
    sols: List[Optional[SparseSolution]] = [None] * (H * W)
    if method == "naive":
        radial = naive_fused_depth(sub, cfg.plan)
    elif method == "naive_single":
        radial = naive_four_phase_depth(sub, cfg.plan)
    else:
        A = A if A is not None else analytic_matrix(cfg)
        if method == "cc_omp" and dictionary is None:
            dictionary = cluster_dictionary(A, solver["k_clusters"], solver["seed"])
        C = to_complex_observation(sub).reshape(H * W, -1)
        sols = solve_all(C, method, A, dictionary, solver, workers)
        radial = np.full(H * W, np.nan)
        for p, sol in enumerate(sols):
            if sol is not None:
                radial[p] = extract_depth_index(sol, A.grid, solver["k_top"], solver["window"]).depth_mm
        radial = radial.reshape(H, W)
    ok = np.isfinite(radial) & (radial > 0)
    axial = np.full((H, W), np.nan)
    axial[ok] = radial_to_axial(radial[ok], x[ok], y[ok])
    depth = DepthMap(axial)
    cloud = backproject(depth, intr) if depth.mask.any() else None
    return Reconstruction(method, depth, radial, sols, cloud)


def solutions_csv(sols: Sequence[Optional[SparseSolution]]) -> str:
    buf = _io.StringIO()
    buf.write("pixel,rank,bin,re,im,|x|,residual_norm\n")
    for p, sol in enumerate(sols):
        if sol is None:
            continue
        order = np.argsort(-np.abs(sol.coefficients), kind="stable")
        for rank, k in enumerate(order):
            z = sol.coefficients[k]
            buf.write(f"{p},{rank},{sol.support[k]},{z.real:.10g},{z.imag:.10g},"
                      f"{abs(z):.10g},{sol.residual_norm:.10g}\n")
    return buf.getvalue()


# ---- on-disk steps ----------------------------------------------------------

def run_simulate(cfg: ExperimentConfig, out: Path) -> List[str]:
    out.mkdir(parents=True, exist_ok=True)
    sim = simulate(cfg)
    H, W = sim.scene.shape
    L = cfg.plan.n_phases
    io.write_json(out / "scene.json", {**scene_to_dict(sim.scene), "config_hash": cfg.hash})
    io.write_raster(out / "taps.f32", sim.raw.taps)
    io.write_raster(out / "darks.f32", sim.raw.darks)
    io.write_raster(out / "truth_depth.f32", sim.truth.values)
    io.write_json(out / "raw.json", {
        "config_hash": cfg.hash,
        "dtype": "float32",
        "byte_order": "little",
        "height": H,
        "width": W,
        "n_phases": L,
        "taps_layout": ["height", "width", "phase_config", "tap(0,90,180,270)"],
        "truth_layout": ["height", "width"],
        "n_frames": sim.raw.n_frames,
        "plan": cfg.plan.to_dict(),
        "noise": cfg.noise.to_dict(),
    })
    io.update_manifest(out, cfg, SIM_FILES)
    return list(SIM_FILES)


def load_raw(cfg: ExperimentConfig, out: Path) -> Tuple[RawFourPhase, DepthMap]:
    io.check_artifacts(out, cfg, SIM_FILES)
    meta = io.read_json(out / "raw.json")
    shape = (meta["height"], meta["width"], meta["n_phases"], 4)
    taps = io.read_raster(out / "taps.f32", shape)
    darks = io.read_raster(out / "darks.f32", shape)
    truth = io.read_raster(out / "truth_depth.f32", shape[:2])
    return RawFourPhase(taps, darks, meta["n_frames"]), DepthMap(truth)


def run_calibrate(cfg: ExperimentConfig, out: Path, noisy: bool = False,
                  csv: bool = False) -> List[str]:
    out.mkdir(parents=True, exist_ok=True)
    noise = cfg.noise if noisy else None
    A = emulate_calibration(cfg.grid, cfg.plan, noise=noise, n_frames=cfg.n_frames,
                            model=cfg.atom_model)
    names = [MATRIX_FILE]
    io.atomic_write_bytes(out / MATRIX_FILE, matrix_to_bytes(A))
    if csv:
        io.atomic_write_text(out / "matrix.csv", matrix_csv(A))
        names.append("matrix.csv")
    io.update_manifest(out, cfg, names)
    return names


def run_reconstruct(cfg: ExperimentConfig, out: Path, methods: Sequence[str],
                    workers: int = 1) -> List[str]:
    raw, _ = load_raw(cfg, out)
    A = None
    if (out / MATRIX_FILE).exists():
        io.check_artifacts(out, cfg, [MATRIX_FILE])
        A = load_matrix(out / MATRIX_FILE)
    names = []
    for method in methods:
        rec = reconstruct(raw, cfg, method, A, workers=workers)
        stem = f"depth_{method}"
        io.write_raster(out / f"{stem}.f32", rec.depth.values)
        io.write_json(out / f"{stem}.json", {
            "config_hash": cfg.hash, "method": method, "dtype": "float32",
            "byte_order": "little", "height": rec.depth.height, "width": rec.depth.width,
            "depth": "axial", "solver": cfg.solver,
            "matrix": "calibrated" if A is not None else "analytic",
        })
        names += [f"{stem}.f32", f"{stem}.json"]
        if method not in ("naive", "naive_single"):
            io.atomic_write_text(out / f"solutions_{method}.csv", solutions_csv(rec.solutions))
            names.append(f"solutions_{method}.csv")
        if rec.cloud is not None:
            write_ply(rec.cloud, out / f"cloud_{method}.ply")
            write_csv(rec.cloud, out / f"cloud_{method}.csv")
            names += [f"cloud_{method}.ply", f"cloud_{method}.csv"]
    io.update_manifest(out, cfg, names)
    return names


def reconstructed_methods(out: Path) -> List[str]:
    arts = io.load_manifest(out).get("artifacts", {})
    return sorted(n[len("depth_"):-len(".f32")] for n in arts
                  if n.startswith("depth_") and n.endswith(".f32"))


def run_evaluate(cfg: ExperimentConfig, out: Path,
                 methods: Optional[Sequence[str]] = None) -> List[str]:
    _, truth = load_raw(cfg, out)
    methods = list(methods) if methods else reconstructed_methods(out)
    if not methods:
        raise FileNotFoundError(f"no reconstructions in {out}")
    maps: Dict[str, DepthMap] = {}
    reports: List[MetricsReport] = []
    for m in methods:
        io.check_artifacts(out, cfg, [f"depth_{m}.f32", f"depth_{m}.json"])
        meta = io.read_json(out / f"depth_{m}.json")
        if (meta["height"], meta["width"]) != truth.values.shape:
            raise ValueError(f"depth_{m} has shape {(meta['height'], meta['width'])}, "
                             f"truth has {truth.values.shape}")
        maps[m] = DepthMap(io.read_raster(out / f"depth_{m}.f32", truth.values.shape))
        reports.append(evaluate(maps[m], truth, m, cfg.grid.span, config=cfg.to_dict()))
    io.atomic_write_text(out / "metrics.json",
                         reports_to_json(reports, config_hash=cfg.hash) + "\n")
    io.atomic_write_text(out / "profile.csv", profile_csv(truth, maps))
    names = ["metrics.json", "profile.csv"]
    io.update_manifest(out, cfg, names)
    return names


def profile_csv(truth: DepthMap, maps: Dict[str, DepthMap], column: Optional[int] = None) -> str:
    """Vertical cross-section through ``column`` (default: the centre column)."""
    H, W = truth.values.shape
    u = W // 2 if column is None else column
    names = sorted(maps)
    buf = _io.StringIO()
    buf.write(",".join(["row", "truth"] + names) + "\n")
    for v in range(H):
        vals = [truth.values[v, u]] + [maps[n].values[v, u] for n in names]
        buf.write(",".join([str(v)] + [f"{x:.6f}" if np.isfinite(x) else "nan" for x in vals]) + "\n")
    return buf.getvalue()


def matrix_info(A: SensingMatrix, k_clusters: int, seed: int) -> dict:
    d = cluster_dictionary(A, min(k_clusters, A.n_bins), seed)
    return {
        "shape": list(A.shape),
        "atom_model": A.atom_model.value,
        "coherence": mutual_coherence(A),
        "coherence_real": mutual_coherence(A, real=True),
        "rank_complex": int(np.linalg.matrix_rank(A.entries)),
        "rank_real": int(np.linalg.matrix_rank(A.real_stacked())),
        "cluster_sizes": d.sizes.tolist(),
        "kmeans_iterations": d.iterations,
    }
