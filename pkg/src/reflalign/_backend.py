"""Kernel backend selection.

``REFL_ALIGN_BACKEND`` picks ``numba`` (default when importable) or ``numpy``.
``REFL_ALIGN_THREADS`` caps numba's thread pool.
"""

import logging
import os

logger = logging.getLogger(__name__)

BACKEND_ENV = "REFL_ALIGN_BACKEND"
THREADS_ENV = "REFL_ALIGN_THREADS"


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def requested_backend() -> str:
    name = os.environ.get(BACKEND_ENV, "numba").strip().lower() or "numba"
    if name not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not numba_available():
        logger.warning("numba not importable; falling back to the numpy kernels")
        return "numpy"
    return name


def apply_thread_cap() -> None:
    raw = os.environ.get(THREADS_ENV)
    if not raw or not numba_available():
        return
    import numba

    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
