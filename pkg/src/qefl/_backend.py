"""Pick the batch kernel implementation at import time.

The compiled ``_kernels_c`` extension is used when it was built; otherwise
the numpy fallback. Set ``QEFL_BACKEND=python`` to force the fallback (the
benchmark and the cross-backend tests do this per call instead).
"""
from __future__ import annotations

import os

from . import _kernels_py

KERNELS = {"python": _kernels_py}
try:
    from . import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None
else:
    KERNELS["c"] = _kernels_c

_requested = os.environ.get("QEFL_BACKEND", "").strip().lower()
if _requested and _requested not in ("c", "python"):
    raise ImportError(f"QEFL_BACKEND must be 'c' or 'python', got {_requested!r}")
if _requested == "c" and _kernels_c is None:
    raise ImportError("QEFL_BACKEND=c but the compiled extension is not built")

NAME = _requested or ("c" if _kernels_c is not None else "python")
kernels = KERNELS[NAME]
