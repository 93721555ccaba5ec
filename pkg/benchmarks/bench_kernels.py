"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. Set CONFORMALKIT_NO_NUMBA=1
to confirm the package still works (and how fast) without the compiler.
Both paths are exercised here regardless of the env flag, and the outputs
are compared so a speedup never hides a silent divergence.
"""
from __future__ import annotations

import time

import numpy as np

from conformalkit import _kernels
from conformalkit._accel import HAVE_NUMBA, NUMBA_ENABLED


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_betainc(rng):
    x = rng.random(200_000)
    a = rng.uniform(0.5, 50.0, x.size)
    b = rng.uniform(0.5, 50.0, x.size)

    def numpy_path():
        return np.array([_kernels.betainc_numpy(xi, ai, bi) for xi, ai, bi in zip(x[:2000], a[:2000], b[:2000])])

    t_np, out_np = _time(numpy_path)
    if HAVE_NUMBA:
        def jit_path():
            return np.array([_kernels.betainc_jit(xi, ai, bi) for xi, ai, bi in zip(x[:2000], a[:2000], b[:2000])])

        jit_path()  # compile outside the timer
        t_jit, out_jit = _time(jit_path)
        assert np.allclose(out_np, out_jit, rtol=0, atol=1e-13)
        return "betainc (2000 scalar calls)", t_np, t_jit
    return "betainc (2000 scalar calls)", t_np, None


def bench_row_order_stats(rng):
    data = rng.standard_normal((20_000, 100))
    t_np, out_np = _time(_kernels.row_order_stats_numpy, data, np.array([90], dtype=np.int64))
    if HAVE_NUMBA:
        _kernels.row_order_stats_jit(data[:10], np.array([9], dtype=np.int64))
        t_jit, out_jit = _time(_kernels.row_order_stats_jit, data, np.array([90], dtype=np.int64))
        assert np.array_equal(out_np, out_jit)
        return "row_order_stats (20000 x 100)", t_np, t_jit
    return "row_order_stats (20000 x 100)", t_np, None


def bench_categorical(rng):
    rows, n, k = 20_000, 100, 5
    labels = rng.integers(1, k + 1, size=(rows, n)).astype(np.int64)
    tie_u = rng.random((rows, n))
    u_test = rng.random(rows)
    t_np, out_np = _time(_kernels.categorical_numerators_numpy, labels, tie_u, u_test, k)
    if HAVE_NUMBA:
        _kernels.categorical_numerators_jit(labels[:10], tie_u[:10], u_test[:10], k)
        t_jit, out_jit = _time(
            _kernels.categorical_numerators_jit, labels, tie_u, u_test, k
        )
        assert np.array_equal(out_np, out_jit)
        return f"categorical_numerators ({rows} x {n}, k={k})", t_np, t_jit
    return f"categorical_numerators ({rows} x {n}, k={k})", t_np, None


def main():
    rng = np.random.default_rng(1729)
    print(f"numba available: {HAVE_NUMBA}; dispatch uses jit: {NUMBA_ENABLED}")
    print(f"{'kernel':<45} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for bench in (bench_betainc, bench_row_order_stats, bench_categorical):
        name, t_np, t_jit = bench(rng)
        if t_jit is None:
            print(f"{name:<45} {t_np * 1e3:>8.2f}ms {'n/a':>10} {'n/a':>8}")
        else:
            print(
                f"{name:<45} {t_np * 1e3:>8.2f}ms {t_jit * 1e3:>8.2f}ms "
                f"{t_np / t_jit:>7.1f}x"
            )


if __name__ == "__main__":
    main()
