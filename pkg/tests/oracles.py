"""Independent reference implementations used only by the tests.

They are written as plain loops or brute-force searches and deliberately
share no code with the package beyond its data types.
"""

import math

import numpy as np


def pair_lstsq_oracle(M, y, nonneg=True):
    """Best support of size <= 2 by exhaustive least squares over all atom pairs.

    ``M`` is the real ``(m, n)`` stacked matrix.  Returns ``(support, coef, residual)``
    with the support sorted.  Singles are tried first; a pair replaces the best
    single only when it lowers the residual by more than 1e-9 relative.
    """
    n = M.shape[1]
    y_norm = np.linalg.norm(y)
    best = (math.inf, (), np.zeros(0))
    for i in range(n):
        a = M[:, i]
        x = a @ y / (a @ a)
        if nonneg and x < 0:
            continue
        r = np.linalg.norm(y - a * x)
        if r < best[0]:
            best = (r, (i,), np.array([x]))
    G = M.T @ M
    b = M.T @ y
    single = best[0]
    for i in range(n):
        for j in range(i + 1, n):
            det = G[i, i] * G[j, j] - G[i, j] ** 2
            if det <= 1e-14:
                continue
            xi = (G[j, j] * b[i] - G[i, j] * b[j]) / det
            xj = (G[i, i] * b[j] - G[i, j] * b[i]) / det
            if nonneg and (xi < 0 or xj < 0):
                continue
            r = np.linalg.norm(y - M[:, i] * xi - M[:, j] * xj)
            if r < best[0] and r < single - 1e-9 * max(y_norm, 1.0):
                best = (r, (i, j), np.array([xi, xj]))
    return best[1], best[2], best[0]


def coherence_loop(E):
    n = E.shape[1]
    mu = 0.0
    for i in range(n):
        for k in range(n):
            if i != k:
                mu = max(mu, abs(np.vdot(E[:, i], E[:, k])))
    return mu


def circular_correlation(delay_phase, ref_phase, duty, samples=4096):
    """Overlap of two rectangular pulse trains, by explicit per-sample loop."""
    t = np.arange(samples) / samples
    emit = (t < duty).astype(float)
    lag = ((delay_phase - ref_phase) / (2 * math.pi)) % 1.0
    shift = int(round(lag * samples)) % samples
    return float(np.dot(emit, np.roll(emit, shift))) / samples / duty


def mae_loop(p, t, m):
    s, n = 0.0, 0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            if m[i, j]:
                s += abs(p[i, j] - t[i, j])
                n += 1
    return s / n


def rmse_loop(p, t, m):
    s, n = 0.0, 0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            if m[i, j]:
                s += (p[i, j] - t[i, j]) ** 2
                n += 1
    return math.sqrt(s / n)


def ssim_loop(p, t, m, win, c1, c2):
    H, W = p.shape
    vals = []
    for i in range(H - win + 1):
        for j in range(W - win + 1):
            if not m[i:i + win, j:j + win].all():
                continue
            a = [p[i + u, j + v] for u in range(win) for v in range(win)]
            b = [t[i + u, j + v] for u in range(win) for v in range(win)]
            n = len(a)
            ma = sum(a) / n
            mb = sum(b) / n
            va = sum((x - ma) ** 2 for x in a) / n
            vb = sum((x - mb) ** 2 for x in b) / n
            cov = sum((x - ma) * (z - mb) for x, z in zip(a, b)) / n
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def recon_loop(g_hat, g):
    num = 0.0
    den = 0.0
    for a, b in zip(g_hat, g):
        num += abs(a - b) ** 2
        den += abs(b) ** 2
    return 100.0 * math.sqrt(num) / math.sqrt(den)
