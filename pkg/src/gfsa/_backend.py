"""Trajectory backend selection.

The compiled kernel is preferred when present; set GFSA_BACKEND=python to
force the pure-numpy runner or GFSA_BACKEND=cython to fail loudly when the
extension is missing. Both backends share one draw protocol, so results
differ only in floating-point summation order.
"""

from __future__ import annotations

import os

_requested = os.environ.get("GFSA_BACKEND", "").strip().lower()
if _requested not in ("", "cython", "python"):
    raise ImportError(f"GFSA_BACKEND must be 'cython' or 'python', got {_requested!r}")

_kernel = None
if _requested in ("", "cython"):
    try:
        from . import _kernel  # type: ignore[attr-defined]
    except ImportError:
        _kernel = None
        if _requested == "cython":
            raise ImportError(
                "GFSA_BACKEND=cython but the compiled kernel is not built; "
                "reinstall with the extension or unset GFSA_BACKEND"
            ) from None

HAVE_COMPILED = _kernel is not None
compiled_kernel = _kernel


def backend_name() -> str:
    """Name of the trajectory backend selected at import time."""
    return "cython" if HAVE_COMPILED else "python"
