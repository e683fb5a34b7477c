"""Reference sparse solvers: CoSaMP and FISTA, plus a method dispatcher."""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.linalg import lstsq
from scipy.optimize import nnls

from ..sensing import SensingMatrix
from .pursuit import SparseSolution, _system, omp

METHODS = ("cc_omp", "omp_full", "cosamp", "fista", "naive")


def _ls(M: np.ndarray, y: np.ndarray, real: bool) -> np.ndarray:
    if real:
        # nearly collinear neighbours make the unconstrained fit explode
        return nnls(M, y)[0]
    return lstsq(M, y, lapack_driver="gelsd", cond=1e-10)[0]


def cosamp(c: np.ndarray, A: SensingMatrix, k_sparse: int = 3, max_iter: int = 50,
           residual_tol: float = 1e-3, real: bool = True) -> SparseSolution:
    """Compressive sampling matching pursuit.

    Each iteration takes the ``2k`` strongest proxy entries, merges them with
    the current support, solves least squares on the union and keeps the ``k``
    largest coefficients.  The iterate with the smallest residual is returned.
    With ``real=True`` the least-squares step is nonnegative.
    """
    if k_sparse < 1:
        raise ValueError("k_sparse must be at least 1")
    M, y = _system(c, A, real)
    n = M.shape[1]
    y_norm = float(np.linalg.norm(y))
    x = np.zeros(n, dtype=M.dtype)
    r = y.copy()
    best = (y_norm, np.zeros(0, dtype=int), np.zeros(0, dtype=M.dtype))
    history = [y_norm]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        proxy = M.conj().T @ r
        score = proxy.real if real else np.abs(proxy)
        omega = np.argsort(-score, kind="stable")[:2 * k_sparse]
        if real:
            omega = omega[score[omega] > 0]
        T = np.union1d(omega, np.flatnonzero(x))
        if T.size == 0:
            converged = True
            break
        b = _ls(M[:, T], y, real)
        keep = np.argsort(-np.abs(b), kind="stable")[:k_sparse]
        x = np.zeros(n, dtype=M.dtype)
        x[T[keep]] = b[keep]
        r = y - M @ x
        rn = float(np.linalg.norm(r))
        history.append(rn)
        if rn < best[0]:
            S = np.flatnonzero(x)
            best = (rn, S, x[S])
        if rn <= residual_tol * y_norm or abs(history[-2] - rn) <= 1e-12 * max(y_norm, 1.0):
            converged = True
            break
    rn, S, xs = best
    return SparseSolution(tuple(S), np.asarray(xs, dtype=complex), rn, it, method="cosamp",
                          converged=converged, residual_history=tuple(history))


def spectral_norm_sq(M: np.ndarray, n_iter: int = 100, seed: int = 0) -> float:
    """Largest eigenvalue of ``M^H M`` by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = M.conj().T @ (M @ v)
        new = float(np.linalg.norm(w))
        if new == 0:
            return 0.0
        v = w / new
        if abs(new - lam) <= 1e-12 * new:
            lam = new
            break
        lam = new
    return lam


def _prox(v: np.ndarray, t: float, real: bool) -> np.ndarray:
    if real:
        # amplitudes are nonnegative: one-sided soft threshold
        return np.maximum(v - t, 0.0)
    mag = np.abs(v)
    scale = np.maximum(1.0 - t / np.maximum(mag, 1e-300), 0.0)
    return v * scale


def fista(c: np.ndarray, A: SensingMatrix, lam: Optional[float] = None, lam_ratio: float = 0.05,
          max_iter: int = 300, tol: float = 1e-5, real: bool = True,
          support_rtol: float = 1e-6):
    """Accelerated proximal gradient for ``0.5 ||Ax - c||^2 + lam ||x||_1``.

    ``c`` may be one observation ``(L,)`` or a batch ``(N, L)``; a batch
    returns a list of solutions.  Without an explicit ``lam`` each pixel uses
    ``lam_ratio * max |A^H c|``.  Iteration stops when the relative change of
    the iterate falls below ``tol``; at the cap the lowest-objective iterate
    seen is returned with ``converged=False``.
    """
    c = np.asarray(c, dtype=complex)
    single = c.ndim == 1
    C = np.atleast_2d(c)
    if C.shape[1] != A.shape[0]:
        raise ValueError(f"observation length {C.shape[1]} != {A.shape[0]} rows")
    M = A.real_stacked() if real else A.entries
    Y = np.hstack([C.real, C.imag]).T if real else C.T      # (m, N)
    N = Y.shape[1]
    n = M.shape[1]
    step = 1.0 / spectral_norm_sq(M)
    corr = M.conj().T @ Y
    if lam is None:
        lam_v = lam_ratio * np.max(np.abs(corr.real if real else corr), axis=0)
    else:
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        lam_v = np.full(N, float(lam))

    def objective(X):
        R = M @ X - Y
        return 0.5 * np.sum(np.abs(R) ** 2, axis=0) + lam_v * np.sum(np.abs(X), axis=0)

    X = np.zeros((n, N), dtype=M.dtype)
    Z = X.copy()
    t = 1.0
    best_X = X.copy()
    best_f = objective(X)
    active = np.ones(N, dtype=bool)
    iters = np.zeros(N, dtype=int)
    thresh = step * lam_v[None, :]
    for _ in range(max_iter):
        if not active.any():
            break
        Xn = _prox(Z - step * (M.conj().T @ (M @ Z - Y)), thresh, real)
        # converged pixels are frozen, so the batch shares one momentum schedule
        Xn[:, ~active] = X[:, ~active]
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Z = Xn + ((t - 1.0) / t_next) * (Xn - X)
        delta = np.linalg.norm(Xn - X, axis=0)
        scale = np.maximum(np.linalg.norm(Xn, axis=0), 1e-300)
        X = Xn
        t = t_next
        iters += active
        f = objective(X)
        better = f < best_f
        best_f[better] = f[better]
        best_X[:, better] = X[:, better]
        active &= delta > tol * scale
    out = []
    for p in range(N):
        x = best_X[:, p]
        peak = np.max(np.abs(x)) if x.size else 0.0
        S = np.flatnonzero(np.abs(x) > support_rtol * peak) if peak > 0 else np.zeros(0, dtype=int)
        r = M[:, S] @ x[S] - Y[:, p]
        out.append(SparseSolution(tuple(S), np.asarray(x[S], dtype=complex),
                                  float(np.linalg.norm(r)), int(iters[p]), method="fista",
                                  converged=not active[p]))
    return out[0] if single else out


def fista_objective(x: np.ndarray, c: np.ndarray, A: SensingMatrix, lam: float,
                    real: bool = True) -> float:
    M, y = _system(c, A, real)
    x = np.asarray(x)
    x = x.real if real else x
    return float(0.5 * np.linalg.norm(M @ x - y) ** 2 + lam * np.sum(np.abs(x)))


def solve_baseline(method: str, c: np.ndarray, A: SensingMatrix, k_sparse: int = 3,
                   params: Optional[dict] = None) -> SparseSolution:
    """Dispatch to ``omp_full``, ``cosamp`` or ``fista`` by name."""
    params = dict(params or {})
    name = method.lower()
    if name == "omp_full":
        return omp(c, A, k_sparse, params.get("residual_tol", 1e-3), params.get("real", True))
    if name == "cosamp":
        return cosamp(c, A, k_sparse, **params)
    if name == "fista":
        return fista(c, A, **params)
    raise ValueError(f"unknown baseline method {method!r}")
