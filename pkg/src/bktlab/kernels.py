"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting ``BKTLAB_PURE_PYTHON=1``
forces the Python fallback.  Both take numpy arrays and modify state in place.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_ext = None
if os.environ.get("BKTLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _ext  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _ext = None

BACKEND = "cython" if _ext is not None else "python"


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def iv_sweep(m: np.ndarray, ptr, nbr, mult, order, beta: float, u, backend: str | None = None):
    """Heat-bath pass over ``order``; ``m`` (int64) is updated in place."""
    backend = backend or BACKEND
    if backend == "cython":
        _ext.iv_sweep(m, _i64(ptr), _i64(nbr), _f64(mult), _i64(order), float(beta), _f64(u))
        return m
    ml = m.tolist()
    _kernels_py.iv_sweep(ml, list(map(int, ptr)), list(map(int, nbr)), list(map(float, mult)),
                         list(map(int, order)), float(beta), list(map(float, u)))
    m[:] = ml
    return m


def villain_sweep(theta: np.ndarray, ptr, nbr, mult, order, logw, grid: int, u1, u2, backend: str | None = None):
    """Heat-bath pass for angles; ``theta`` (float64) is updated in place."""
    backend = backend or BACKEND
    if len(logw) != int(grid):
        raise ValueError("the log-weight table must live on the sampling grid")
    if backend == "cython":
        buf = np.empty(int(grid))
        _ext.villain_sweep(theta, _i64(ptr), _i64(nbr), _f64(mult), _i64(order), _f64(logw), int(grid),
                           _f64(u1), _f64(u2), buf)
        return theta
    tl = theta.tolist()
    _kernels_py.villain_sweep(tl, list(map(int, ptr)), list(map(int, nbr)), list(map(float, mult)),
                              list(map(int, order)), list(map(float, logw)), int(grid),
                              list(map(float, u1)), list(map(float, u2)), [0.0] * int(grid))
    theta[:] = tl
    return theta


def iv_exhaustive(edges, coupling, f, K: int, backend: str | None = None):
    backend = backend or BACKEND
    if backend == "cython":
        return _ext.iv_exhaustive(_i64(edges).reshape(-1, 2), _f64(coupling), _f64(f), int(K))
    return _kernels_py.iv_exhaustive(np.asarray(edges).reshape(-1, 2).tolist(), list(map(float, coupling)),
                                     list(map(float, f)), int(K))
