"""Hot numeric kernels, each with a numba @njit build and a numpy fallback.

The compiled build is selected at import time (see ``_accel``); the loop-style
sources below stay valid plain Python, so everything works without numba.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import HAVE_NUMBA, NUMBA_ENABLED, njit

_BETA_EPS = 1e-15
_BETA_MAXIT = 500  # iteration cap; hitting it signals non-convergence
_BETA_TINY = 1e-300


def _betacf(x: float, a: float, b: float) -> float:
    # Modified-Lentz evaluation of the incomplete-beta continued fraction.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < _BETA_EPS:
            return h
    return math.nan


def _make_betainc(cf):
    # Single source for both builds; ``cf`` is the plain or jitted fraction.
    def betainc_impl(x: float, a: float, b: float) -> float:
        """Regularized incomplete beta I_x(a, b) for a, b > 0, x in [0, 1].

        Continued fraction with the symmetry switch at x = a / (a + b);
        returns NaN if it fails to converge within the iteration cap.
        """
        if x == 0.0:
            return 0.0
        if x == 1.0:
            return 1.0
        ln_front = (
            math.lgamma(a + b)
            - math.lgamma(a)
            - math.lgamma(b)
            + a * math.log(x)
            + b * math.log1p(-x)
        )
        front = math.exp(ln_front)
        if x < a / (a + b):
            return front * cf(x, a, b) / a
        return 1.0 - front * cf(1.0 - x, b, a) / b

    return betainc_impl


betainc_numpy = _make_betainc(_betacf)


def row_order_stats_numpy(mat: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """Per-row order statistics of a (rows, n) matrix at 1-based ranks."""
    srt = np.sort(mat, axis=1)
    return srt[:, np.asarray(ranks, dtype=np.int64) - 1]


def _row_order_stats_loop(mat: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    rows, n = mat.shape
    out = np.empty((rows, ranks.size), dtype=np.float64)
    buf = np.empty(n, dtype=np.float64)
    for r in range(rows):
        buf[:] = mat[r]
        buf.sort()
        for j in range(ranks.size):
            out[r, j] = buf[ranks[j] - 1]
    return out


def categorical_numerators_numpy(
    labels: np.ndarray, u: np.ndarray, u_test: np.ndarray, k: int
) -> np.ndarray:
    """Closed-form conformal p-value numerators for label-only data.

    ``labels``: (rows, n) observed labels in {0, ..., k-1}; ``u``: matching
    uniforms; ``u_test``: (rows,) test-point uniforms. Returns integer
    numerators (rows, k); the p-value for candidate y is out[r, y] / (n + 1).
    """
    rows, n = labels.shape
    onehot = labels[:, :, None] == np.arange(k)[None, None, :]
    counts = onehot.sum(axis=1).astype(np.int64)
    fired = onehot & (u <= u_test[:, None])[:, :, None]
    cnt_u = fired.sum(axis=1).astype(np.int64)

    row_idx = np.repeat(np.arange(rows), k)
    gamma = np.zeros((rows, n + 2), dtype=np.int64)
    np.add.at(gamma, (row_idx, counts.ravel()), 1)
    mass_by_count = np.zeros((rows, n + 2), dtype=np.int64)
    np.add.at(mass_by_count, (row_idx, counts.ravel()), cnt_u.ravel())

    weights = np.arange(n + 2, dtype=np.int64)
    cum = np.cumsum(weights[None, :] * gamma, axis=1)
    ny = counts
    num = (
        1
        + np.take_along_axis(cum, ny, axis=1)
        - ny
        + cnt_u
        + np.take_along_axis(mass_by_count, ny + 1, axis=1)
    )
    return num.astype(np.int64)


def _categorical_numerators_loop(
    labels: np.ndarray, u: np.ndarray, u_test: np.ndarray, k: int
) -> np.ndarray:
    rows, n = labels.shape
    out = np.empty((rows, k), dtype=np.int64)
    counts = np.zeros(k, dtype=np.int64)
    cnt_u = np.zeros(k, dtype=np.int64)
    gamma = np.zeros(n + 2, dtype=np.int64)
    mass_by_count = np.zeros(n + 2, dtype=np.int64)
    cum = np.zeros(n + 2, dtype=np.int64)
    for r in range(rows):
        counts[:] = 0
        cnt_u[:] = 0
        gamma[:] = 0
        mass_by_count[:] = 0
        ut = u_test[r]
        for i in range(n):
            lab = labels[r, i]
            counts[lab] += 1
            if u[r, i] <= ut:
                cnt_u[lab] += 1
        for lab in range(k):
            c = counts[lab]
            gamma[c] += 1
            mass_by_count[c] += cnt_u[lab]
        cum[0] = 0
        for j in range(1, n + 2):
            cum[j] = cum[j - 1] + j * gamma[j]
        for y in range(k):
            ny = counts[y]
            out[r, y] = 1 + cum[ny] - ny + cnt_u[y] + mass_by_count[ny + 1]
    return out


if HAVE_NUMBA:
    _betacf_jit = njit(cache=True)(_betacf)
    # no cache=True: the closure over _betacf_jit is not cacheable
    betainc_jit = njit(_make_betainc(_betacf_jit))
    row_order_stats_jit = njit(cache=True)(_row_order_stats_loop)
    categorical_numerators_jit = njit(cache=True)(_categorical_numerators_loop)
else:  # pragma: no cover - plain-Python stand-ins when numba is absent
    betainc_jit = betainc_numpy
    row_order_stats_jit = _row_order_stats_loop
    categorical_numerators_jit = _categorical_numerators_loop


def betainc(x: float, a: float, b: float) -> float:
    if NUMBA_ENABLED:
        return betainc_jit(x, a, b)
    return betainc_numpy(x, a, b)


def row_order_stats(mat: np.ndarray, ranks) -> np.ndarray:
    # Always the numpy build: its batched SIMD sort beats the compiled
    # per-row loop by ~10x (see benchmarks/bench_kernels.py). The jit build
    # stays importable so the benchmark keeps both honest.
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    ranks = np.asarray(ranks, dtype=np.int64)
    return row_order_stats_numpy(mat, ranks)


def categorical_numerators(labels, u, u_test, k: int) -> np.ndarray:
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    u_test = np.ascontiguousarray(u_test, dtype=np.float64)
    if NUMBA_ENABLED:
        return categorical_numerators_jit(labels, u, u_test, k)
    return categorical_numerators_numpy(labels, u, u_test, k)
