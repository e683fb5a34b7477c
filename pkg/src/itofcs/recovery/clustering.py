"""K-Means partitioning of a sensing dictionary and per-pixel cluster selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from ..sensing import SensingMatrix


def atom_features(A: SensingMatrix) -> np.ndarray:
    """One row per atom: the complex column flattened to ``[Re; Im]``."""
    return A.real_stacked().T.copy()


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    chosen = [int(rng.integers(n))]
    centers[0] = X[chosen[0]]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for i in range(1, k):
        closest[chosen] = 0.0
        total = closest.sum()
        if total <= 0:
            pool = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(pool))
        else:
            nxt = int(rng.choice(n, p=closest / total))
        chosen.append(nxt)
        centers[i] = X[nxt]
        closest = np.minimum(closest, _sq_dists(X, centers[i:i + 1])[:, 0])
    return centers


def kmeans(X: np.ndarray, k: int, seed: int = 0, tol: float = 1e-9,
           max_iter: int = 300) -> Tuple[np.ndarray, np.ndarray, int]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(labels, centers, iterations)``.  A cluster that loses all its
    points is re-seeded at the point farthest from its current center, so
    every returned cluster is non-empty.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centers = kmeans_plusplus(X, k, rng)
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(X, centers)
        labels = np.argmin(d, axis=1)
        new = centers.copy()
        empty = np.flatnonzero(np.bincount(labels, minlength=k) == 0)
        if empty.size:
            own = d[np.arange(n), labels]
            for c in empty:
                far = int(np.argmax(own))
                labels[far] = c
                own[far] = -1.0
        for c in range(k):
            new[c] = X[labels == c].mean(axis=0)
        shift = np.sqrt(((new - centers) ** 2).sum(1)).max()
        centers = new
        if shift <= tol:
            break
    labels = np.argmin(_sq_dists(X, centers), axis=1)
    # the final assignment can in principle empty a cluster again
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        far = int(np.argmax(_sq_dists(X, centers)[np.arange(n), labels]))
        labels[far] = c
        centers[c] = X[far]
    return labels, centers, it


@dataclass(frozen=True, eq=False)
class ClusteredDictionary:
    matrix: SensingMatrix
    k_clusters: int
    labels: np.ndarray
    centroids: np.ndarray          # (k, L) complex, unit norm
    means: np.ndarray              # (k, 2L) real K-Means centers
    seed: int = 0
    iterations: int = 0
    _members: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.shape != (self.matrix.n_bins,):
            raise ValueError("one label per atom required")
        if not 1 <= self.k_clusters <= self.matrix.n_bins:
            raise ValueError("k_clusters must lie in [1, n_bins]")
        if np.any(np.bincount(labels, minlength=self.k_clusters) == 0):
            raise ValueError("every cluster must be non-empty")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k_clusters)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)

    def candidates(self, cluster: int, margin: int = 2) -> np.ndarray:
        """Cluster members plus every atom within ``margin`` bins of one."""
        key = (int(cluster), int(margin))
        if key not in self._members:
            idx = self.members(cluster)
            if margin > 0:
                spread = (idx[:, None] + np.arange(-margin, margin + 1)[None, :]).ravel()
                idx = np.unique(np.clip(spread, 0, self.matrix.n_bins - 1))
            self._members[key] = idx
        return self._members[key]


def cluster_dictionary(A: SensingMatrix, k_clusters: int = 8, seed: int = 0) -> ClusteredDictionary:
    """Partition the atoms of ``A`` with Euclidean K-Means on their real features."""
    X = atom_features(A)
    labels, means, iters = kmeans(X, k_clusters, seed=seed)
    L = A.shape[0]
    cent = means[:, :L] + 1j * means[:, L:]
    norms = np.linalg.norm(cent, axis=1)
    for c in np.flatnonzero(norms <= 1e-12):
        # a mean that cancels to zero: fall back to its first member atom
        cent[c] = A.entries[:, np.flatnonzero(labels == c)[0]]
        norms[c] = np.linalg.norm(cent[c])
    cent = cent / norms[:, None]
    return ClusteredDictionary(A, k_clusters, labels, cent, means, seed, iters)


def atom_scores(M: np.ndarray, r: np.ndarray, real: bool) -> np.ndarray:
    """Correlation of each column of ``M`` with ``r``: signed (real) or magnitude (complex)."""
    s = M.conj().T @ r
    return s.real if real else np.abs(s)


def select_cluster(c: np.ndarray, dictionary: ClusteredDictionary, real: bool = True) -> int:
    """Cluster holding the atom best correlated with ``c``; ties go to the lower id."""
    c = np.asarray(c)
    if not np.any(c):
        raise ValueError("cannot select a cluster for a zero observation")
    scores = atom_scores(dictionary.matrix.entries, c, real)
    best = np.full(dictionary.k_clusters, -np.inf)
    np.maximum.at(best, dictionary.labels, scores)
    return int(np.argmax(best))


def nearest_centroid(r: np.ndarray, dictionary: ClusteredDictionary, real: bool = True) -> int:
    """K-Means assignment of the normalized residual ``r`` (complex length L)."""
    nrm = np.linalg.norm(r)
    if nrm == 0:
        raise ValueError("zero residual has no cluster")
    if real:
        feat = np.concatenate([r.real, r.imag]) / nrm
        return int(np.argmin(((dictionary.means - feat[None, :]) ** 2).sum(1)))
    return int(np.argmax(np.abs(dictionary.centroids.conj() @ r)))
