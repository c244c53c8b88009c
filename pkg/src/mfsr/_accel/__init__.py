"""Hot-kernel backend selection.

The compiled extension is preferred when available; the pure-numpy
fallback is used otherwise.  Set ``MFSR_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and debugging).
"""

import os

if os.environ.get("MFSR_PURE_PYTHON"):
    from . import pyfallback as _impl
    BACKEND = "python"
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
        _impl.lasso_homotopy, _impl.block_scores
        BACKEND = "native"
    except (ImportError, AttributeError):
        from . import pyfallback as _impl
        BACKEND = "python"

STATUS_OK = 0
STATUS_MAX_STEPS = 1

lasso_homotopy = _impl.lasso_homotopy
block_scores = _impl.block_scores


def backend_name() -> str:
    return BACKEND
