"""Greedy sparse recovery: cluster-constrained OMP and its unconstrained form.

Backscatter amplitudes are physical intensities, so by default the solvers
work on the real system ``[Re A; Im A] x = [Re c; Im c]`` with real
coefficients and pick atoms by *signed* correlation.  With complex
coefficients an atom and a copy of it shifted by a quarter modulation period
differ only by a factor ``j`` and cannot be told apart; ``real=False`` gives
that complex behaviour for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import qr, solve_triangular

from ..sensing import SensingMatrix
from .clustering import ClusteredDictionary, atom_scores, nearest_centroid, select_cluster

RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class SparseSolution:
    support: Tuple[int, ...]
    coefficients: np.ndarray
    residual_norm: float
    iterations: int
    cluster_id: Optional[int] = None
    method: str = "cc_omp"
    stalled: bool = False
    converged: bool = True
    clusters: Tuple[int, ...] = ()       # active cluster when each atom was chosen
    ops: Tuple[int, ...] = ()            # atom correlations evaluated per iteration
    residual_history: Tuple[float, ...] = ()

    def __post_init__(self):
        support = tuple(int(j) for j in self.support)
        coef = np.asarray(self.coefficients, dtype=complex).reshape(-1)
        if len(set(support)) != len(support):
            raise ValueError("support indices must be distinct")
        if len(support) != coef.size:
            raise ValueError("support and coefficients differ in length")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "coefficients", coef)

    def dense(self, n: int) -> np.ndarray:
        g = np.zeros(n, dtype=complex)
        g[list(self.support)] = self.coefficients
        return g

    def residual(self, c: np.ndarray, A: SensingMatrix) -> np.ndarray:
        return np.asarray(c) - A.entries[:, list(self.support)] @ self.coefficients


def lstsq_rank_revealing(M: np.ndarray, y: np.ndarray, rtol: float = RANK_RTOL):
    """Least squares via column-pivoted QR; returns ``(x, rank)``.

    When ``rank < M.shape[1]`` the returned ``x`` is ``None``.
    """
    if M.shape[1] == 0:
        return np.zeros(0, dtype=M.dtype), 0
    Q, R, piv = qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if diag[0] > 0 else 0
    if rank < M.shape[1]:
        return None, rank
    z = solve_triangular(R, Q.conj().T @ y)
    x = np.empty_like(z)
    x[piv] = z
    return x, rank


def _system(c: np.ndarray, A: SensingMatrix, real: bool):
    c = np.asarray(c, dtype=complex).reshape(-1)
    if c.shape[0] != A.shape[0]:
        raise ValueError(f"observation length {c.shape[0]} != {A.shape[0]} rows")
    if real:
        return A.real_stacked(), np.concatenate([c.real, c.imag])
    return A.entries, c


def _as_complex(r: np.ndarray, L: int, real: bool) -> np.ndarray:
    return r[:L] + 1j * r[L:] if real else r


CandidateFn = Callable[[int, np.ndarray], Tuple[np.ndarray, Optional[int], int]]


def greedy_pursuit(c: np.ndarray, A: SensingMatrix, k_sparse: int, residual_tol: float,
                   candidates: CandidateFn, real: bool = True, method: str = "omp",
                   cluster_id: Optional[int] = None) -> SparseSolution:
    """OMP loop over a per-iteration candidate set.

    ``candidates(k, residual)`` returns ``(atom indices, cluster id, extra ops)``
    for iteration ``k``; ``residual`` is the current complex residual.
    """
    if k_sparse < 1:
        raise ValueError("k_sparse must be at least 1")
    if residual_tol < 0:
        raise ValueError("residual_tol must be nonnegative")
    M, y = _system(c, A, real)
    L = A.shape[0]
    y_norm = float(np.linalg.norm(y))
    support: list = []
    clusters: list = []
    ops: list = []
    history = [y_norm]
    x = np.zeros(0, dtype=M.dtype)
    r = y.copy()
    stalled = False
    it = 0
    while len(support) < k_sparse and history[-1] > residual_tol * y_norm and history[-1] > 0:
        cand, cid, extra = candidates(it, _as_complex(r, L, real))
        it += 1
        scores = atom_scores(M[:, cand], r, real)
        ops.append(int(cand.size + extra))
        best = int(np.argmax(scores))
        if real and scores[best] <= 0:
            break  # no atom adds positive backscatter
        j = int(cand[best])
        if j in support:
            break
        trial = support + [j]
        xt, _ = lstsq_rank_revealing(M[:, trial], y)
        if xt is None:
            stalled = True
            break
        support, x = trial, xt
        clusters.append(cid if cid is not None else -1)
        r = y - M[:, support] @ x
        history.append(float(np.linalg.norm(r)))
    return SparseSolution(
        support=tuple(support),
        coefficients=np.asarray(x, dtype=complex),
        residual_norm=history[-1],
        iterations=it,
        cluster_id=cluster_id,
        method=method,
        stalled=stalled,
        clusters=tuple(clusters),
        ops=tuple(ops),
        residual_history=tuple(history),
    )


def omp(c: np.ndarray, A: SensingMatrix, k_sparse: int = 3, residual_tol: float = 1e-3,
        real: bool = True) -> SparseSolution:
    """Orthogonal matching pursuit over the whole dictionary."""
    everything = np.arange(A.n_bins)
    return greedy_pursuit(c, A, k_sparse, residual_tol,
                          lambda k, r: (everything, None, 0), real, method="omp_full")


def cc_omp(c: np.ndarray, dictionary: ClusteredDictionary, k_sparse: int = 3,
           residual_tol: float = 1e-3, real: bool = True, margin: int = 2,
           strict: bool = False) -> SparseSolution:
    """Cluster-constrained OMP.

    The pixel's cluster comes from :func:`select_cluster`, and the first atom
    is searched among that cluster's members plus ``margin`` neighbouring bins.
    Later atoms are searched inside the cluster nearest to the current
    residual (one centroid comparison per cluster), so interference returns in
    other clusters can still be separated.  ``strict=True`` keeps every
    iteration inside the pixel's cluster.
    """
    c = np.asarray(c)
    home = select_cluster(c, dictionary, real)

    def candidates(k, r):
        if k == 0 or strict:
            return dictionary.candidates(home, margin), home, 0
        cid = nearest_centroid(r, dictionary, real)
        return dictionary.candidates(cid, margin), cid, dictionary.k_clusters

    return greedy_pursuit(c, dictionary.matrix, k_sparse, residual_tol, candidates, real,
                          method="cc_omp", cluster_id=home)


def refine_adjacent(c: np.ndarray, A: SensingMatrix, sol: SparseSolution,
                    real: bool = True, min_ratio: float = 1e-6) -> SparseSolution:
    """Refit the strongest atom together with one of its grid neighbours.

    Neighbouring atoms are nearly collinear, so greedy selection essentially
    never picks the bin next to one it already holds; an off-grid return then
    collapses onto a single bin.  This step adds the neighbour (left or right)
    whose joint least-squares fit lowers the residual most while keeping both
    coefficients positive.  The solution is returned unchanged when no
    neighbour qualifies or the neighbour's weight is below ``min_ratio`` of
    the lead atom's.
    """
    if not sol.support:
        return sol
    M, y = _system(c, A, real)
    support = list(sol.support)
    lead = support[int(np.argmax(np.abs(sol.coefficients)))]
    best = None
    for nb in (lead - 1, lead + 1):
        if nb < 0 or nb >= A.n_bins or nb in support:
            continue
        trial = support + [nb]
        x, _ = lstsq_rank_revealing(M[:, trial], y)
        if x is None:
            continue
        pair = np.array([x[support.index(lead)], x[-1]])
        if real and np.any(pair.real <= 0):
            continue
        if np.abs(pair[1]) < min_ratio * np.abs(pair[0]):
            continue
        rn = float(np.linalg.norm(y - M[:, trial] @ x))
        if rn < sol.residual_norm and (best is None or rn < best[0]):
            best = (rn, trial, x)
    if best is None:
        return sol
    rn, trial, x = best
    return SparseSolution(
        support=tuple(trial),
        coefficients=np.asarray(x, dtype=complex),
        residual_norm=rn,
        iterations=sol.iterations,
        cluster_id=sol.cluster_id,
        method=sol.method,
        stalled=sol.stalled,
        converged=sol.converged,
        clusters=sol.clusters,
        ops=sol.ops,
        residual_history=sol.residual_history + (rn,),
    )
