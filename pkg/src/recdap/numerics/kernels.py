"""Kernel backend selection.

The compiled extension is used when it was built; setting
``RECDAP_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RECDAP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

scatter_add_rows = _impl.scatter_add_rows
segment_softmax = _impl.segment_softmax
segment_softmax_backward = _impl.segment_softmax_backward


def backends():
    """Return every importable backend as ``{name: module}``."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
