"""Select the compiled kernels when available, else the numpy fallback.

Set ``SPARSEID_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
implementation in use (``"compiled"`` or ``"numpy"``).
"""

from __future__ import annotations

import os

from . import _kernels_py

STATUS_CONVERGED = _kernels_py.STATUS_CONVERGED
STATUS_MAX_ITER = _kernels_py.STATUS_MAX_ITER
STATUS_NUMERICAL = _kernels_py.STATUS_NUMERICAL


def _load():
    if os.environ.get("SPARSEID_PURE_PYTHON", "").strip() not in ("", "0"):
        return _kernels_py, "numpy"
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return _kernels_py, "numpy"
    return _kernels, "compiled"


_impl, BACKEND = _load()
ipm_l1 = _impl.ipm_l1
fista_l1 = _impl.fista_l1
