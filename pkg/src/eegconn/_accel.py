"""Numba on/off switch.

Set ``EEGCONN_DISABLE_NUMBA=1`` in the environment before importing
:mod:`eegconn` to route every hot kernel through its pure-numpy twin.
The numpy path is also used automatically when numba is not importable.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_FLAG = os.environ.get("EEGCONN_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG not in {"1", "true", "yes", "on"}

numba_default = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
    "boundscheck": False,
}


def njit(fn):
    """Compile ``fn`` with the package numba settings, or return it untouched."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(**numba_default)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
