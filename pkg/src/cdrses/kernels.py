"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``CDRSES_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

NEITHER, WORK, HOME = _kernels_py.NEITHER, _kernels_py.WORK, _kernels_py.HOME

_compiled = None
if not os.environ.get("CDRSES_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"
_impl = _compiled if _compiled is not None else _kernels_py


def backends():
    """Available implementations by name, fallback always included."""
    out = {"numpy": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def histogram_indicators(offsets, x, y, n, k):
    return _impl.histogram_indicators(
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(n, dtype=np.float64),
        int(k),
    )


def classify_slots(ts, tz_offset_s, day0, holiday_by_day):
    return _impl.classify_slots(
        np.ascontiguousarray(ts, dtype=np.int64),
        int(tz_offset_s),
        int(day0),
        np.ascontiguousarray(holiday_by_day, dtype=np.uint8),
    )
