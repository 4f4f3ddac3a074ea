"""Backend selection for the hot kernels.

``SOAPOOL_BACKEND=numpy`` forces the pure-numpy path; anything else (or unset)
uses numba when it is importable.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

REQUESTED = os.environ.get("SOAPOOL_BACKEND", "numba").strip().lower()
if REQUESTED not in ("numba", "numpy"):
    raise ImportError(f"SOAPOOL_BACKEND must be 'numba' or 'numpy', got {REQUESTED!r}")

USE_NUMBA = HAVE_NUMBA and REQUESTED == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    Compilation is lazy, so kernels are only built when first called.
    """
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)
