"""Backend selection for the compiled kernels.

Set ``SYNTHTS_BENCH_NO_NUMBA=1`` to force the vectorized numpy path even
when numba is importable. The flag is read once, at import time.
"""

from __future__ import annotations

import os

_FLAG = "SYNTHTS_BENCH_NO_NUMBA"

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None
else:
    # the TBB layer shipped with some wheels is too old and warns on first use
    if "NUMBA_THREADING_LAYER" not in os.environ:
        _numba.config.THREADING_LAYER = "workqueue"

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes"}


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, otherwise a no-op decorator.

    Compilation is lazy, so decorating a kernel costs nothing until the
    numba path actually calls it.
    """
    if _numba is not None:
        return _numba.njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


if _numba is not None:
    prange = _numba.prange
else:  # pragma: no cover
    prange = range


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
