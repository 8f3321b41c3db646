"""Numba backend selection for the hot numeric kernels.

The environment variable ``REID_FUSE_NUMBA`` picks the execution path:
unset or truthy uses ``numba.njit`` when numba is importable; ``0``,
``false`` or ``off`` forces the pure-numpy fallback. The choice is made
once at import time.
"""

from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)

_FALSEY = {"0", "false", "off", "no"}


def _env_wants_numba() -> bool:
    return os.environ.get("REID_FUSE_NUMBA", "1").strip().lower() not in _FALSEY


def _null_decorator(*args, **kwargs):
    """Stand-in for njit when numba is disabled or unavailable."""
    if args and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


NUMBA_ENABLED = False
njit = _null_decorator

if _env_wants_numba():
    try:
        from numba import njit as _numba_njit

        njit = _numba_njit
        NUMBA_ENABLED = True
    except ImportError:
        logger.warning("numba not importable; falling back to pure numpy kernels")
else:
    logger.debug("REID_FUSE_NUMBA disabled numba; using pure numpy kernels")


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
