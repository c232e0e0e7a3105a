"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting the environment
variable ``HRPRICER_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("HRPRICER_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
    except ImportError:
        _impl = _pykernels
    else:
        BACKEND = "cython"

psor_lines = _impl.psor_lines
tridiag_lines = _impl.tridiag_lines
crr_put = _impl.crr_put


def backends():
    """Mapping of every importable backend name to its module."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
