"""Kernel selection: compiled extension when present, NumPy otherwise.

The ENCLOSURE_THREADS environment variable caps OpenMP threads in the
compiled sweeps (and tau sweeps elsewhere); unset means leave the OpenMP
default alone.
"""

import os

try:
    from . import _core as _impl
    HAVE_COMPILED = True
except ImportError:
    from . import _core_np as _impl
    HAVE_COMPILED = False


def thread_cap():
    """Thread budget from ENCLOSURE_THREADS, or None when unset."""
    raw = os.environ.get("ENCLOSURE_THREADS", "").strip()
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("ENCLOSURE_THREADS must be a positive integer")
    return n


def _apply_cap():
    cap = thread_cap()
    if cap is not None and HAVE_COMPILED:
        _impl.set_threads(cap)


_apply_cap()

update_h = _impl.update_h
update_e = _impl.update_e
inject = _impl.inject
zero_edges = _impl.zero_edges
gather = _impl.gather


def backend_name():
    return "compiled" if HAVE_COMPILED else "numpy"
