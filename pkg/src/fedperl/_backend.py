"""Kernel backend selection.

The MLP kernels exist twice: loop-based numba kernels (``kernels_numba``) and
vectorised numpy kernels (``kernels_numpy``). Numba is used when importable
unless ``FEDPERL_NUMBA`` is set to ``0``/``false``/``off``. The choice is made
once at import time.
"""

from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

_FLAG = os.environ.get("FEDPERL_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in {"0", "false", "off", "no"}

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _WANT_NUMBA

if USE_NUMBA:
    from . import kernels_numba as kernels
else:
    if _WANT_NUMBA:  # pragma: no cover
        log.warning("numba not importable; using numpy kernels")
    from . import kernels_numpy as kernels  # type: ignore[no-redef]

BACKEND = "numba" if USE_NUMBA else "numpy"

__all__ = ["BACKEND", "HAVE_NUMBA", "USE_NUMBA", "kernels"]
