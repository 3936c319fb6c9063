"""Backend selection: compiled quadrature core when available, numpy otherwise.

Set DARE_PURE_PYTHON=1 to force the numpy fallback regardless of what is
installed (useful for benchmarking and debugging).
"""

import os

import numpy as np

from . import pykernels

if os.environ.get("DARE_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    _impl = pykernels
else:
    try:
        from . import _quadcore as _impl
    except ImportError:
        _impl = pykernels

BACKEND_NAME = _impl.BACKEND_NAME


def reduce_terms(kind, a0, sigma, theta1, nodes, weights, want_grad=True):
    a0 = np.ascontiguousarray(a0, dtype=float)
    nodes = np.ascontiguousarray(nodes, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    th = 0.0 if theta1 is None else float(theta1)
    return _impl.reduce_terms(int(kind), a0, float(sigma), th, nodes, weights, want_grad)
