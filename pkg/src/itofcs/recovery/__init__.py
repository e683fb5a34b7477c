"""Sparse recovery of per-pixel backscatter and depth extraction."""

from .clustering import ClusteredDictionary, cluster_dictionary, nearest_centroid, select_cluster
from .pursuit import SparseSolution, cc_omp, lstsq_rank_revealing, omp, refine_adjacent

__all__ = [
    "ClusteredDictionary",
    "SparseSolution",
    "cc_omp",
    "cluster_dictionary",
    "lstsq_rank_revealing",
    "nearest_centroid",
    "omp",
    "refine_adjacent",
    "select_cluster",
]
