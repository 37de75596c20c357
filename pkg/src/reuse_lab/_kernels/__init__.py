"""SGD kernel backend selection.

Imports the compiled Cython kernels when present, otherwise the numpy
fallback.  Set REUSE_LAB_PURE_PYTHON=1 to force the fallback (used by the
backend-equivalence tests and the benchmark).  `BACKEND` names the active
implementation.
"""

from __future__ import annotations

import os

if os.environ.get("REUSE_LAB_PURE_PYTHON", "0") not in ("", "0"):
    from . import _sgd_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _sgd_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _sgd_py as _impl

        BACKEND = "python"

dense_chain = _impl.dense_chain
dense_chain_tracked = _impl.dense_chain_tracked
onehot_chain = _impl.onehot_chain
onehot_chain_tracked = _impl.onehot_chain_tracked

__all__ = [
    "BACKEND",
    "dense_chain",
    "dense_chain_tracked",
    "onehot_chain",
    "onehot_chain_tracked",
]
