"""Batched numeric kernels.

Every kernel has two implementations with identical signatures:

* ``*_loops``  explicit loops, compiled with numba when available
* ``*_numpy``  vectorised numpy

The public names (``emd2_ordered_batch`` etc.) pick one according to
``emd2loss._jit.USE_NUMBA`` and normalise dtypes first. Both routes are kept
importable so the test-suite and ``benchmarks/bench_kernels.py`` can compare them.
"""

import math

import numpy as np

from ._jit import USE_NUMBA, njit

LOG_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# squared CDF loss on ordered classes


def _emd2_ordered_loops(P, labels):
    n, C = P.shape
    values = np.empty(n)
    grads = np.empty((n, C))
    diff = np.empty(C)
    for r in range(n):
        k = labels[r]
        acc = 0.0
        val = 0.0
        for i in range(C):
            acc += P[r, i]
            d = acc - (1.0 if i >= k else 0.0)
            diff[i] = d
            val += d * d
        values[r] = val
        suffix = 0.0
        for i in range(C - 1, -1, -1):
            suffix += diff[i]
            grads[r, i] = 2.0 * suffix
    return values, grads


def _emd2_ordered_numpy(P, labels):
    C = P.shape[1]
    diff = np.cumsum(P, axis=1) - (np.arange(C)[None, :] >= labels[:, None])
    values = np.sum(diff * diff, axis=1)
    grads = 2.0 * np.cumsum(diff[:, ::-1], axis=1)[:, ::-1]
    return values, grads


# ---------------------------------------------------------------------------
# one-hot target EMD: sum_i p_i D[i, k]


def _single_label_loops(P, labels, D):
    n, C = P.shape
    values = np.empty(n)
    grads = np.empty((n, C))
    for r in range(n):
        k = labels[r]
        val = 0.0
        for i in range(C):
            w = D[i, k]
            grads[r, i] = w
            val += P[r, i] * w
        values[r] = val
    return values, grads


def _single_label_numpy(P, labels, D):
    W = D[:, labels].T
    return np.sum(P * W, axis=1), W.copy()


# ---------------------------------------------------------------------------
# hybrid regulariser: sum_i p_i^2 (D[i, k]^omega + mu)


def _hybrid_reg_loops(P, labels, D, omega, mu):
    n, C = P.shape
    values = np.empty(n)
    grads = np.empty((n, C))
    # C*C powers once instead of n*C
    W = np.empty((C, C))
    for i in range(C):
        for j in range(C):
            W[i, j] = D[i, j] ** omega + mu
    for r in range(n):
        k = labels[r]
        val = 0.0
        for i in range(C):
            w = W[i, k]
            p = P[r, i]
            val += p * p * w
            grads[r, i] = 2.0 * p * w
        values[r] = val
    return values, grads


def _hybrid_reg_numpy(P, labels, D, omega, mu):
    W = (D ** omega + mu)[:, labels].T
    return np.sum(P * P * W, axis=1), 2.0 * P * W


# ---------------------------------------------------------------------------
# row-wise percentile ranks (strictly-smaller counts / C)


def _percentile_rows_loops(M):
    C = M.shape[0]
    out = np.empty((C, C))
    for i in range(C):
        for j in range(C):
            cnt = 0
            x = M[i, j]
            for m in range(C):
                if M[i, m] < x:
                    cnt += 1
            out[i, j] = cnt / C
    return out


def _percentile_rows_numpy(M):
    C = M.shape[0]
    return np.sum(M[:, None, :] < M[:, :, None], axis=2) / C


# ---------------------------------------------------------------------------
# centroid accumulation of L1-normalised features (in place)


def _accumulate_loops(sums, counts, F, labels):
    n, d = F.shape
    skipped = 0
    for r in range(n):
        norm = 0.0
        for j in range(d):
            norm += abs(F[r, j])
        if norm == 0.0 or not math.isfinite(norm):
            skipped += 1
            continue
        k = labels[r]
        for j in range(d):
            sums[k, j] += F[r, j] / norm
        counts[k] += 1
    return skipped


def _accumulate_numpy(sums, counts, F, labels):
    norms = np.sum(np.abs(F), axis=1)
    ok = (norms > 0.0) & np.isfinite(norms)
    np.add.at(sums, labels[ok], F[ok] / norms[ok, None])
    counts += np.bincount(labels[ok], minlength=counts.shape[0]).astype(counts.dtype)
    return int(np.count_nonzero(~ok))


# ---------------------------------------------------------------------------
# log-domain Sinkhorn, one problem per row of A/Bm, shared cost matrix


def _sinkhorn_loops(A, Bm, D, reg, iters):
    n, C = A.shape
    F = np.empty((n, C, C))
    fs = np.zeros((n, C))
    gs = np.zeros((n, C))
    tmp = np.empty(C)
    for r in range(n):
        loga = np.empty(C)
        logb = np.empty(C)
        for i in range(C):
            loga[i] = math.log(max(A[r, i], LOG_FLOOR))
            logb[i] = math.log(max(Bm[r, i], LOG_FLOOR))
        f = np.zeros(C)
        g = np.zeros(C)
        for _ in range(iters):
            for i in range(C):
                mx = -np.inf
                for j in range(C):
                    tmp[j] = (g[j] - D[i, j]) / reg
                    if tmp[j] > mx:
                        mx = tmp[j]
                s = 0.0
                for j in range(C):
                    s += math.exp(tmp[j] - mx)
                f[i] = reg * (loga[i] - (mx + math.log(s)))
            for j in range(C):
                mx = -np.inf
                for i in range(C):
                    tmp[i] = (f[i] - D[i, j]) / reg
                    if tmp[i] > mx:
                        mx = tmp[i]
                s = 0.0
                for i in range(C):
                    s += math.exp(tmp[i] - mx)
                g[j] = reg * (logb[j] - (mx + math.log(s)))
        for i in range(C):
            for j in range(C):
                F[r, i, j] = math.exp((f[i] + g[j] - D[i, j]) / reg)
        fs[r] = f
        gs[r] = g
    return F, fs, gs


def _lse(x, axis):
    mx = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(mx, axis=axis) + np.log(np.sum(np.exp(x - mx), axis=axis))


def _sinkhorn_numpy(A, Bm, D, reg, iters):
    loga = np.log(np.maximum(A, LOG_FLOOR))
    logb = np.log(np.maximum(Bm, LOG_FLOOR))
    f = np.zeros_like(A)
    g = np.zeros_like(Bm)
    for _ in range(iters):
        f = reg * (loga - _lse((g[:, None, :] - D[None, :, :]) / reg, axis=2))
        g = reg * (logb - _lse((f[:, :, None] - D[None, :, :]) / reg, axis=1))
    F = np.exp((f[:, :, None] + g[:, None, :] - D[None, :, :]) / reg)
    return F, f, g


# ---------------------------------------------------------------------------
# compiled variants and dispatch

emd2_ordered_jit = njit(_emd2_ordered_loops)
single_label_jit = njit(_single_label_loops)
hybrid_reg_jit = njit(_hybrid_reg_loops)
percentile_rows_jit = njit(_percentile_rows_loops)
accumulate_jit = njit(_accumulate_loops)
sinkhorn_jit = njit(_sinkhorn_loops)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def emd2_ordered_batch(P, labels):
    """Values and d/dp gradients of the squared-CDF loss for each row of ``P``."""
    fn = emd2_ordered_jit if USE_NUMBA else _emd2_ordered_numpy
    return fn(_f64(P), _i64(labels))


def single_label_batch(P, labels, D):
    fn = single_label_jit if USE_NUMBA else _single_label_numpy
    return fn(_f64(P), _i64(labels), _f64(D))


def hybrid_reg_batch(P, labels, D, omega, mu):
    fn = hybrid_reg_jit if USE_NUMBA else _hybrid_reg_numpy
    return fn(_f64(P), _i64(labels), _f64(D), float(omega), float(mu))


def percentile_rows(M):
    fn = percentile_rows_jit if USE_NUMBA else _percentile_rows_numpy
    return fn(_f64(M))


def accumulate(sums, counts, F, labels):
    """Add L1-normalised rows of ``F`` into ``sums[labels]`` in place.

    Returns the number of rows skipped for having zero (or non-finite) L1 norm.
    ``sums`` must be float64 and ``counts`` int64, both C-contiguous.
    """
    fn = accumulate_jit if USE_NUMBA else _accumulate_numpy
    return int(fn(sums, counts, _f64(F), _i64(labels)))


def sinkhorn_batch(A, Bm, D, reg, iters):
    fn = sinkhorn_jit if USE_NUMBA else _sinkhorn_numpy
    return fn(_f64(np.atleast_2d(A)), _f64(np.atleast_2d(Bm)), _f64(D), float(reg), int(iters))


# name -> (numpy route, compiled route); used by tests and the benchmark
ROUTES = {
    "emd2_ordered": (_emd2_ordered_numpy, emd2_ordered_jit),
    "single_label": (_single_label_numpy, single_label_jit),
    "hybrid_reg": (_hybrid_reg_numpy, hybrid_reg_jit),
    "percentile_rows": (_percentile_rows_numpy, percentile_rows_jit),
    "accumulate": (_accumulate_numpy, accumulate_jit),
    "sinkhorn": (_sinkhorn_numpy, sinkhorn_jit),
}
