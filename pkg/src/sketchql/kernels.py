"""Backend selection for the sketch hash kernels.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used.  Set SKETCHQL_PURE_PYTHON=1 to force the fallback (used
by the backend-comparison benchmark and tests).
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("SKETCHQL_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _cmcore as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

row_keys = _impl.row_keys
hash_columns = _impl.hash_columns
insert = _impl.insert
lookup_min = _impl.lookup_min
