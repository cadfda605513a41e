"""Hot numeric loops, each with a numba kernel and a vectorized numpy twin.

The public entry points dispatch on :data:`synthts_bench._accel.USE_NUMBA`.
Both paths evaluate the same recurrences in the same order, so DTW costs
agree bit-for-bit and perplexity calibration agrees to rounding.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit, prange

__all__ = ["dtw_pairs", "perplexity_betas", "dtw_pairs_numba", "dtw_pairs_numpy",
           "perplexity_betas_numba", "perplexity_betas_numpy"]

_NO_BAND = -1


# ---------------------------------------------------------------------------
# Dynamic time warping
# ---------------------------------------------------------------------------

@njit(cache=True)
def _dtw_one(x, y, radius):
    n = x.shape[0]
    m = y.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        if radius < 0:
            jlo = 1
            jhi = m
        else:
            jlo = max(1, i - radius)
            jhi = min(m, i + radius)
        # only cells jlo-1..jhi+1 of this row are read by the next one
        cur[jlo - 1] = np.inf
        if jhi < m:
            cur[jhi + 1] = np.inf
        xi = x[i - 1]
        left = np.inf
        diag = prev[jlo - 1]
        for j in range(jlo, jhi + 1):
            up = prev[j]
            best = up
            if left < best:
                best = left
            if diag < best:
                best = diag
            v = abs(xi - y[j - 1]) + best
            cur[j] = v
            left = v
            diag = up
        prev, cur = cur, prev
    return prev[m]


@njit(parallel=True, cache=True)
def _dtw_pairs_kernel(X, Y, ii, jj, radius):
    out = np.empty(ii.shape[0])
    for p in prange(ii.shape[0]):
        out[p] = _dtw_one(X[ii[p]], Y[jj[p]], radius)
    return out


def dtw_pairs_numba(X, Y, ii, jj, radius=_NO_BAND):
    return _dtw_pairs_kernel(X, Y, ii, jj, int(radius))


def _dtw_block_numpy(xs, ys, radius):
    """Anti-diagonal DTW over a block of equal-length pairs.

    ``xs`` is (P, n) and ``ys`` is (P, m). Each diagonal ``d = i + j`` only
    depends on the two previous ones, so one diagonal is a handful of
    vectorized operations over every pair in the block.
    """
    P, n = xs.shape
    m = ys.shape[1]
    d2 = np.full((P, n + 1), np.inf)  # diagonal d-2
    d1 = np.full((P, n + 1), np.inf)  # diagonal d-1
    d2[:, 0] = 0.0
    for d in range(2, n + m + 1):
        lo = max(1, d - m)
        hi = min(n, d - 1)
        cur = np.full((P, n + 1), np.inf)
        i = np.arange(lo, hi + 1)
        cost = np.abs(xs[:, i - 1] - ys[:, d - i - 1])
        # predecessors, compared in the same order as the scalar kernel
        best = d1[:, i - 1]                      # (i-1, j)
        best = np.where(d1[:, i] < best, d1[:, i], best)      # (i, j-1)
        best = np.where(d2[:, i - 1] < best, d2[:, i - 1], best)  # (i-1, j-1)
        val = cost + best
        if radius >= 0:
            outside = np.abs(2 * i - d) > radius
            val[:, outside] = np.inf
        cur[:, lo:hi + 1] = val
        d2, d1 = d1, cur
    return d1[:, n].copy()


def dtw_pairs_numpy(X, Y, ii, jj, radius=_NO_BAND, block=256):
    out = np.empty(len(ii))
    for start in range(0, len(ii), block):
        sl = slice(start, start + block)
        out[sl] = _dtw_block_numpy(X[ii[sl]], Y[jj[sl]], int(radius))
    return out


def dtw_pairs(X, Y, ii, jj, radius=None):
    """DTW cost for each index pair ``(X[ii[k]], Y[jj[k]])``.

    Parameters
    ----------
    X, Y : ndarray
        2-D float64 arrays of sequences (rows). Rows of one array share a length.
    ii, jj : ndarray
        Integer row indices into ``X`` and ``Y``.
    radius : int or None
        Sakoe-Chiba radius on ``|i - j|``; ``None`` leaves the path unconstrained.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    ii = np.ascontiguousarray(ii, dtype=np.int64)
    jj = np.ascontiguousarray(jj, dtype=np.int64)
    r = _NO_BAND if radius is None else int(radius)
    if len(ii) == 0:
        return np.empty(0)
    if _accel.USE_NUMBA:
        return dtw_pairs_numba(X, Y, ii, jj, r)
    return dtw_pairs_numpy(X, Y, ii, jj, r)


# ---------------------------------------------------------------------------
# Perplexity calibration (t-SNE conditional affinities)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _row_entropy(d, beta):
    s = 0.0
    sd = 0.0
    for k in range(d.shape[0]):
        p = np.exp(-d[k] * beta)
        s += p
        sd += d[k] * p
    return np.log(s) + beta * sd / s


@njit(parallel=True, cache=True)
def _betas_kernel(D, log_perp, tol, max_iter):
    n = D.shape[0]
    betas = np.ones(n)
    for r in prange(n):
        d = D[r]
        beta = 1.0
        lo = -np.inf
        hi = np.inf
        for _ in range(max_iter):
            diff = _row_entropy(d, beta) - log_perp
            if abs(diff) < tol:
                break
            if diff > 0.0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = beta * 0.5 if lo == -np.inf else 0.5 * (beta + lo)
        betas[r] = beta
    return betas


def perplexity_betas_numba(D, log_perp, tol=1e-5, max_iter=200):
    return _betas_kernel(D, float(log_perp), float(tol), int(max_iter))


def perplexity_betas_numpy(D, log_perp, tol=1e-5, max_iter=200):
    n = D.shape[0]
    beta = np.ones(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        P = np.exp(-D * beta[:, None])
        s = P.sum(axis=1)
        H = np.log(s) + beta * (D * P).sum(axis=1) / s
        diff = H - log_perp
        active &= np.abs(diff) >= tol
        up = active & (diff > 0)
        down = active & (diff <= 0)
        lo = np.where(up, beta, lo)
        hi = np.where(down, beta, hi)
        new_up = np.where(np.isinf(hi), beta * 2.0, 0.5 * (beta + hi))
        new_down = np.where(np.isinf(lo), beta * 0.5, 0.5 * (beta + lo))
        beta = np.where(up, new_up, np.where(down, new_down, beta))
    return beta


def perplexity_betas(D, log_perp, tol=1e-5, max_iter=200):
    """Per-row precisions ``beta = 1/(2 sigma^2)`` matching a target entropy.

    ``D`` is (n, n-1): squared distances from each point to every other point,
    already shifted so each row's minimum is 0 (entropy is shift-invariant and
    the shift keeps ``exp`` from underflowing).
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    if _accel.USE_NUMBA:
        return perplexity_betas_numba(D, log_perp, tol, max_iter)
    return perplexity_betas_numpy(D, log_perp, tol, max_iter)
