"""Optional numba acceleration.

Hot kernels live in ``_kernels`` with two implementations: an ``@njit``
compiled one and a pure-numpy fallback. The compiled path is used whenever
numba imports cleanly; set the environment variable ``CONFORMALKIT_NO_NUMBA=1``
(before import) to force the numpy path. ``benchmarks/bench_kernels.py``
compares the two.
"""
from __future__ import annotations

import os

DISABLE_ENV = "CONFORMALKIT_NO_NUMBA"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        # Signature-compatible passthrough so kernels stay importable.
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


NUMBA_ENABLED = HAVE_NUMBA and os.environ.get(DISABLE_ENV, "0").lower() not in (
    "1",
    "true",
    "yes",
)
