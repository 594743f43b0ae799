"""Selective-scan kernel backends.

The compiled Cython kernel is used when its extension module imported
cleanly; otherwise the numpy reference implementation takes over.  Set
``DMSR_BACKEND=numpy`` to force the fallback or ``DMSR_BACKEND=cython``
to fail loudly when the extension is missing.  ``benchmarks/bench_scan.py``
compares the two.
"""

from __future__ import annotations

import os

import numpy as np

from . import _scan_py
from ._scan_py import SERIES_EPS

_requested = os.environ.get("DMSR_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "cython"):
    raise ValueError(f"DMSR_BACKEND must be 'numpy' or 'cython', "
                     f"got {_requested!r}")

_impl = None
if _requested in ("", "cython"):
    try:
        from . import _scan_cy as _impl
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "DMSR_BACKEND=cython but the compiled scan kernel is not "
                "built; run `pip install -e . --no-build-isolation`")
        _impl = None
if _impl is None:
    _impl = _scan_py

BACKEND = "numpy" if _impl is _scan_py else "cython"


def available_backends() -> dict:
    """Name -> module for every importable backend (for tests/benchmarks)."""
    out = {"numpy": _scan_py}
    try:
        from . import _scan_cy
        out["cython"] = _scan_cy
    except ImportError:
        pass
    return out


def _c(arr):
    return np.ascontiguousarray(arr, dtype=np.float64)


def scan_forward(x, delta, b, c, a, d_skip):
    return _impl.scan_forward(_c(x), _c(delta), _c(b), _c(c), _c(a),
                              _c(d_skip))


def scan_backward(x, delta, b, c, a, d_skip, h, dy):
    return _impl.scan_backward(_c(x), _c(delta), _c(b), _c(c), _c(a),
                               _c(d_skip), _c(h), _c(dy))
