"""Pick the kernel backend at import time.

The compiled Cython module is used when it was built; otherwise the numpy
fallback.  ``EVHDR_BACKEND=python`` forces the fallback, ``=cython``
makes a missing extension an import error.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_choice = os.environ.get("EVHDR_BACKEND", "auto").lower()
if _choice == "python":
    kernels = _pykernels
elif _choice == "cython":
    if _ckernels is None:
        raise ImportError("EVHDR_BACKEND=cython but evhdr._ckernels is not built")
    kernels = _ckernels
else:
    kernels = _ckernels if _ckernels is not None else _pykernels

BACKEND = kernels.NAME


def available():
    """Names of the backends importable in this environment."""
    return ["python"] + (["cython"] if _ckernels is not None else [])


def get(name):
    if name == "python":
        return _pykernels
    if name == "cython" and _ckernels is not None:
        return _ckernels
    raise ValueError(f"backend {name!r} is not available")


def thread_count():
    """Worker cap from ``EVHDR_THREADS`` (default: CPU count)."""
    raw = os.environ.get("EVHDR_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1
