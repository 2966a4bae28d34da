"""Hot graph kernels with a compiled fast path.

The Cython extension ``_ckernels`` is used when it has been built; otherwise
the numpy/pure-Python versions in ``_pykernels`` are used.  Setting
``BOTCASCADE_PURE_PYTHON=1`` forces the fallback.

Kernels
-------
betweenness(indptr, indices, n)
    Unnormalized directed Brandes betweenness over a CSR adjacency.
spmm(indptr, indices, data, x)
    Sparse (CSR) times dense product.
"""
import os

from . import _pykernels

if os.environ.get("BOTCASCADE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

betweenness = _impl.betweenness
spmm = _impl.spmm


def available_backends():
    """Return mapping backend name -> kernel module for every importable backend."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends

__all__ = ["BACKEND", "betweenness", "spmm", "available_backends"]
