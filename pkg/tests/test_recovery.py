import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itofcs.recovery import (
    ClusteredDictionary,
    SparseSolution,
    cc_omp,
    cluster_dictionary,
    lstsq_rank_revealing,
    omp,
    refine_adjacent,
    select_cluster,
)
from itofcs.recovery.baselines import cosamp, fista, fista_objective, solve_baseline
from itofcs.recovery.clustering import atom_features, kmeans
from itofcs.recovery.depth import (
    DepthClampWarning,
    LookupTable,
    extract_depth_index,
    index_to_depth,
    naive_four_phase_depth,
    naive_fused_depth,
)
from itofcs.sensing import (
    AtomModel,
    DepthGrid,
    ModulationPlan,
    build_sensing_matrix,
    matrix_from_columns,
)
from itofcs.simulator import (
    NoiseModel,
    RawFourPhase,
    baseline_subtract,
    render_four_phase,
    synthesize_observation,
)

from oracles import pair_lstsq_oracle

GRID = DepthGrid(300, 1300, 1)
COARSE = DepthGrid(300, 1300, 4)
PLAN = ModulationPlan()


@pytest.fixture(scope="module")
def A():
    return build_sensing_matrix(GRID, PLAN)


@pytest.fixture(scope="module")
def D(A):
    return cluster_dictionary(A, 8, seed=0)


@pytest.fixture(scope="module")
def A_coarse():
    return build_sensing_matrix(COARSE, PLAN)


@pytest.fixture(scope="module")
def D_coarse(A_coarse):
    return cluster_dictionary(A_coarse, 8, seed=0)


def _wcss(X, labels):
    return sum(((X[labels == c] - X[labels == c].mean(0)) ** 2).sum() for c in np.unique(labels))


# ---- K-Means ------------------------------------------------------------------

def test_kmeans_single_cluster():
    X = np.random.default_rng(0).normal(size=(40, 3))
    labels, centers, _ = kmeans(X, 1)
    assert np.all(labels == 0)
    assert np.allclose(centers[0], X.mean(0))


def test_kmeans_one_point_per_cluster():
    X = np.random.default_rng(1).normal(size=(12, 4))
    labels, centers, _ = kmeans(X, 12)
    assert sorted(labels.tolist()) == list(range(12))
    assert _wcss(X, labels) == pytest.approx(0.0, abs=1e-20)


def test_kmeans_rejects_bad_k():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 0)


def test_kmeans_beats_random_partitions():
    A = build_sensing_matrix(COARSE, PLAN, atom_model=AtomModel.IDEAL_SINUSOID)
    X = atom_features(A)
    labels, _, _ = kmeans(X, 8, seed=7)
    w = _wcss(X, labels)
    rng = np.random.default_rng(123)
    for _ in range(50):
        rand = rng.permutation(np.arange(X.shape[0]) % 8)
        assert w < _wcss(X, rand)


def test_kmeans_deterministic():
    X = np.random.default_rng(2).normal(size=(100, 5))
    a = kmeans(X, 5, seed=3)
    b = kmeans(X, 5, seed=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_cluster_dictionary_partition(D, A):
    assert D.sizes.sum() == A.n_bins
    assert np.all(D.sizes > 0)
    assert np.allclose(np.linalg.norm(D.centroids, axis=1), 1.0)
    cand = D.candidates(0, 2)
    mem = D.members(0)
    assert set(mem) <= set(cand)
    assert np.all(np.min(np.abs(cand[:, None] - mem[None, :]), axis=1) <= 2)


# ---- select_cluster -----------------------------------------------------------

def _toy(labels):
    plan = ModulationPlan.uniform(4)
    grid = DepthGrid(300, 303, 1)
    A = matrix_from_columns(np.eye(4, dtype=complex), grid, plan)
    k = max(labels) + 1
    means = np.zeros((k, 8))
    cent = np.zeros((k, 4), dtype=complex)
    for c in range(k):
        idx = [i for i, l in enumerate(labels) if l == c]
        cent[c, idx] = 1 / math.sqrt(len(idx))
    return ClusteredDictionary(A, k, np.array(labels), cent, means)


def test_select_cluster_picks_best_atom_owner():
    d = _toy([0, 0, 1, 1])
    assert select_cluster(np.array([0, 0, 0.2, 1.0]), d) == 1
    assert select_cluster(np.array([0.9, 0, 0.2, 0]), d) == 0


def test_select_cluster_tie_goes_to_lower_id():
    d = _toy([1, 0, 1, 0])
    assert select_cluster(np.array([1.0, 1.0, 0, 0]), d) == 0
    assert select_cluster(np.array([1.0, 1.0, 0, 0]), d, real=False) == 0


def test_select_cluster_zero_rejected(D):
    with pytest.raises(ValueError):
        select_cluster(np.zeros(20), D)


def test_select_cluster_matches_home_of_single_atom(A, D):
    for j in (0, 123, 500, 1000):
        assert select_cluster(A.entries[:, j], D) == D.labels[j]


# ---- least squares ------------------------------------------------------------

def test_lstsq_rank_deficient():
    M = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
    x, rank = lstsq_rank_revealing(M, np.ones(3))
    assert x is None and rank == 1
    x, rank = lstsq_rank_revealing(np.eye(3)[:, :2], np.array([1.0, 2.0, 3.0]))
    assert rank == 2 and np.allclose(x, [1, 2])


# ---- cc_omp -------------------------------------------------------------------

def test_cc_omp_single_atom(A, D):
    c = A.entries[:, 350]
    sol = cc_omp(c, D)
    assert sol.support == (350,)
    assert sol.coefficients[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.residual_norm <= 1e-12
    assert sol.cluster_id == D.labels[350]


def test_cc_omp_matches_pair_oracle(A_coarse, D_coarse):
    c = synthesize_observation([(500.0, 1.0), (900.0, 0.4)], A_coarse)
    sol = cc_omp(c, D_coarse, k_sparse=2)
    support, coef, _ = pair_lstsq_oracle(A_coarse.real_stacked(), np.concatenate([c.real, c.imag]))
    assert tuple(sorted(sol.support)) == support == (50, 150)
    got = dict(zip(sol.support, sol.coefficients.real))
    assert got[50] == pytest.approx(1.0, abs=1e-9)
    assert got[150] == pytest.approx(0.4, abs=1e-9)


def test_cc_omp_two_path_fine_grid(A, D):
    c = synthesize_observation([(500.0, 1.0), (900.0, 0.4)], A)
    sol = cc_omp(c, D)
    assert set(sol.support) == {200, 600}
    assert sol.residual_norm <= 1e-9


def test_cc_omp_extra_atom_negligible(A, D):
    # exact two-path data: a third atom, if taken at all, carries no weight
    c = synthesize_observation([(500.0, 1.0), (900.0, 0.4)], A)
    sol = cc_omp(c, D, k_sparse=3, residual_tol=0.0)
    mags = sorted(np.abs(sol.coefficients), reverse=True)
    assert len(mags) < 3 or mags[2] <= 1e-6


def test_cc_omp_validation(A, D):
    with pytest.raises(ValueError):
        cc_omp(A.entries[:, 0], D, k_sparse=0)
    with pytest.raises(ValueError):
        cc_omp(np.ones(5), D)


@st.composite
def _paths(draw):
    n = draw(st.integers(1, 3))
    bins = draw(st.lists(st.integers(0, 1000), min_size=n, max_size=n, unique=True))
    amps = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    return [(300.0 + b, a) for b, a in zip(bins, amps)]


@settings(max_examples=30, deadline=None)
@given(_paths())
def test_cc_omp_residual_monotone(paths):
    A = build_sensing_matrix(GRID, PLAN)
    D = cluster_dictionary(A, 8)
    sol = cc_omp(synthesize_observation(paths, A), D)
    h = np.array(sol.residual_history)
    assert np.all(np.diff(h) <= 1e-12 * h[0])


@settings(max_examples=30, deadline=None)
@given(_paths())
def test_cc_omp_strict_support_in_cluster(paths):
    A = build_sensing_matrix(GRID, PLAN)
    D = cluster_dictionary(A, 8)
    c = synthesize_observation(paths, A)
    sol = cc_omp(c, D, strict=True)
    allowed = set(D.candidates(select_cluster(c, D), 2).tolist())
    assert set(sol.support) <= allowed


@settings(max_examples=30, deadline=None)
@given(_paths(), st.integers(-8, 8))
def test_cc_omp_scale_equivariant(paths, e):
    # power-of-two scaling is exact in floating point, so near-ties break identically
    alpha = 2.0 ** e
    A = build_sensing_matrix(GRID, PLAN)
    D = cluster_dictionary(A, 8)
    c = synthesize_observation(paths, A)
    s1 = cc_omp(c, D)
    s2 = cc_omp(alpha * c, D)
    assert s1.support == s2.support
    assert np.allclose(alpha * s1.coefficients, s2.coefficients, rtol=1e-9, atol=1e-12 * alpha)


@settings(max_examples=20, deadline=None)
@given(_paths(), st.floats(0.01, 100.0))
def test_cc_omp_residual_scales(paths, alpha):
    A = build_sensing_matrix(GRID, PLAN)
    D = cluster_dictionary(A, 8)
    c = synthesize_observation(paths, A)
    r1 = cc_omp(c, D).residual_norm / np.linalg.norm(c)
    r2 = cc_omp(alpha * c, D).residual_norm / np.linalg.norm(alpha * c)
    assert r1 <= 1e-3 + 1e-9 or r1 == pytest.approx(r2, rel=1e-6, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(_paths())
def test_cc_omp_ops_follow_cluster_size(paths):
    A = build_sensing_matrix(GRID, PLAN)
    D = cluster_dictionary(A, 8)
    sol = cc_omp(synthesize_observation(paths, A), D)
    for k, (cid, ops) in enumerate(zip(sol.clusters, sol.ops)):
        extra = 0 if k == 0 else D.k_clusters
        assert ops == D.candidates(cid, 2).size + extra
    assert sol.ops[0] < A.n_bins


def test_omp_full_single_atom(A):
    sol = omp(A.entries[:, 10], A)
    assert sol.support == (10,) and sol.method == "omp_full"
    assert sol.ops[0] == A.n_bins


def test_refine_adjacent_splits_offgrid(A):
    # a return halfway between bins 400 and 401
    c = 0.5 * A.entries[:, 400] + 0.5 * A.entries[:, 401]
    sol = SparseSolution((400,), np.array([1.0]), float(np.linalg.norm(c - A.entries[:, 400])), 1)
    ref = refine_adjacent(c, A, sol)
    assert set(ref.support) == {400, 401}
    assert np.allclose(ref.coefficients.real, [0.5, 0.5], atol=1e-6)
    assert ref.residual_norm < sol.residual_norm


def test_refine_adjacent_keeps_exact_solution(A):
    c = A.entries[:, 400]
    sol = omp(c, A)
    assert refine_adjacent(c, A, sol) is sol


# ---- baselines ----------------------------------------------------------------

@pytest.mark.parametrize("method", ["omp_full", "cosamp", "fista"])
def test_baselines_single_atom(A, method):
    c = A.entries[:, 555]
    sol = solve_baseline(method, c, A)
    est = extract_depth_index(sol, GRID)
    assert abs(est.depth_index - 555) <= 0.5


def test_cosamp_exact_two_path(A):
    c = synthesize_observation([(500.0, 1.0), (900.0, 0.4)], A)
    sol = cosamp(c, A, k_sparse=2)
    got = {j: x.real for j, x in zip(sol.support, sol.coefficients) if abs(x) > 1e-9}
    assert set(got) == {200, 600}
    assert got[200] == pytest.approx(1.0, abs=1e-6)
    assert got[600] == pytest.approx(0.4, abs=1e-6)


def test_fista_huge_lambda_gives_zero(A):
    c = A.entries[:, 100]
    sol = fista(c, A, lam=1e6)
    assert sol.support == ()
    assert sol.residual_norm == pytest.approx(np.linalg.norm(c), rel=1e-12)


def test_fista_negative_lambda_rejected(A):
    with pytest.raises(ValueError):
        fista(A.entries[:, 0], A, lam=-1.0)


@settings(max_examples=15, deadline=None)
@given(_paths(), st.floats(0.001, 0.5))
def test_fista_objective_below_zero_iterate(paths, lam):
    A = build_sensing_matrix(GRID, PLAN)
    c = synthesize_observation(paths, A)
    sol = fista(c, A, lam=lam, max_iter=50)
    f = fista_objective(sol.dense(A.n_bins), c, A, lam)
    assert f <= 0.5 * np.linalg.norm(c) ** 2 + 1e-12


def test_fista_batch_matches_single(A):
    C = np.stack([A.entries[:, 100], 0.5 * A.entries[:, 700]])
    batch = fista(C, A, max_iter=100)
    for i in range(2):
        one = fista(C[i], A, max_iter=100)
        assert one.support == batch[i].support
        assert np.allclose(one.coefficients, batch[i].coefficients)


def test_solve_baseline_unknown(A):
    with pytest.raises(ValueError):
        solve_baseline("lasso", A.entries[:, 0], A)


# ---- depth extraction ---------------------------------------------------------

def test_extract_single_atom():
    sol = SparseSolution((347,), np.array([0.8]), 0.0, 1)
    est = extract_depth_index(sol, GRID)
    assert est.depth_index == 347 and est.depth_mm == 647.0
    assert est.secondary_paths == ()


def test_extract_weighted_centroid():
    sol = SparseSolution((100, 101), np.array([0.6, 0.4]), 0.0, 2)
    est = extract_depth_index(sol, GRID)
    assert est.depth_index == pytest.approx(100.4, abs=1e-12)
    assert est.depth_mm == pytest.approx(400.4, abs=1e-9)


def test_extract_window_excludes_far_atom():
    sol = SparseSolution((100, 101, 600), np.array([0.6, 0.4, 0.5]), 0.0, 3)
    est = extract_depth_index(sol, GRID)
    assert est.depth_index == pytest.approx(100.4)
    assert est.secondary_paths == ((900.0, 0.5),)


def test_extract_empty_rejected():
    with pytest.raises(ValueError):
        extract_depth_index(SparseSolution((), np.zeros(0), 1.0, 0), GRID)
    with pytest.raises(ValueError):
        extract_depth_index(SparseSolution((3,), np.array([1.0]), 0, 1), GRID, k_top=0)


def test_index_to_depth_examples():
    assert index_to_depth(0, GRID) == (300.0, False)
    d, cl = index_to_depth(100.4, GRID)
    assert d == pytest.approx(400.4) and not cl
    assert index_to_depth(1000, GRID) == (1300.0, False)


def test_index_to_depth_clamps_with_warning():
    with pytest.warns(DepthClampWarning):
        assert index_to_depth(-2.0, GRID) == (300.0, True)
    with pytest.warns(DepthClampWarning):
        assert index_to_depth(1005.0, GRID) == (1300.0, True)


def test_lookup_table(tmp_path):
    lut = LookupTable([0, 1, 2], [300.0, 302.0, 310.0])
    assert lut(1.5) == pytest.approx(306.0)
    p = tmp_path / "lut.csv"
    p.write_text("index,depth_mm\n0,300\n1000,1300\n")
    lut2 = LookupTable.load_csv(p)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert index_to_depth(100.4, GRID, lut2)[0] == pytest.approx(400.4)
    assert np.allclose(LookupTable.from_grid(GRID)(np.arange(5)), GRID.depths[:5])
    with pytest.raises(ValueError):
        LookupTable([0, 0], [1, 2])


# ---- naive decoder ------------------------------------------------------------

def test_naive_phase_pi():
    taps = np.array([[[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0]]])
    raw = RawFourPhase(taps, np.zeros_like(taps), subtracted=True)
    plan = ModulationPlan(phase_shifts=(0.0, 1.0))
    d = naive_four_phase_depth(raw, plan)[0]
    assert d == pytest.approx(299792458 * math.pi / (4 * math.pi * 100e6) * 1e3, abs=1e-9)
    assert d == pytest.approx(749.48, abs=0.01)


def test_naive_balanced_taps_nan():
    raw = RawFourPhase(np.full((1, 20, 4), 3.0), np.zeros((1, 20, 4)), subtracted=True)
    assert np.isnan(naive_four_phase_depth(raw, PLAN)[0])
    assert np.isnan(naive_fused_depth(raw, PLAN)[0])


@pytest.mark.parametrize("model", list(AtomModel))
def test_naive_single_path_round_trip(model):
    raw = baseline_subtract(render_four_phase([(600.0, 1.0)], PLAN, noise=NoiseModel.noiseless(),
                                              model=model))
    assert naive_fused_depth(raw, PLAN) == pytest.approx(600.0, abs=0.5)
