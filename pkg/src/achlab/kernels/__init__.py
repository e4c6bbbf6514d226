"""Hot loops with a compiled numba path and a pure-numpy fallback.

Set ``ACHLAB_DISABLE_NUMBA=1`` before import to force the numpy kernels.
The compiled path is also skipped automatically when numba cannot be
imported.  :func:`backend` returns the module of either flavour so tests
and benchmarks can compare them directly.
"""

from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _numpy

_FORM_CODES = {"scalar-double-well": 0, "product-triple-well": 1, "spliced": 2}


def _load_numba() -> ModuleType | None:
    try:
        from . import _numba
    except Exception:  # pragma: no cover - depends on the environment
        return None
    return _numba


_DISABLED = os.environ.get("ACHLAB_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
_compiled = None if _DISABLED else _load_numba()
ACTIVE = "numba" if _compiled is not None else "numpy"


def backend(name: str | None = None) -> ModuleType:
    """Kernel module for ``name`` ("numba" or "numpy"); default is the active one."""
    name = name or ACTIVE
    if name == "numpy":
        return _numpy
    if name == "numba":
        mod = _compiled if _compiled is not None else _load_numba()
        if mod is None:
            raise RuntimeError("numba backend is unavailable")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def _potential_args(P):
    splice_r = P.splice.radius if P.splice is not None else 0.0
    splice_tau = P.splice.tau if P.splice is not None else 0.0
    return _FORM_CODES[P.form], np.ascontiguousarray(P.minima, dtype=np.float64), splice_r, splice_tau


def polyline_descent(x0, P, max_iter: int, tol: float, window: int, which: str | None = None):
    """Projected BB descent of the discrete path action; returns (path, value, iterations, converged)."""
    form, minima, sr, st = _potential_args(P)
    x, f, it, ok = backend(which).polyline_descent(np.asarray(x0, dtype=np.float64), form, minima, sr, st,
                                                   max_iter, tol, window)
    return np.asarray(x), float(f), int(it), bool(ok)


def polyline_action(x, P, which: str | None = None):
    form, minima, sr, st = _potential_args(P)
    val, grad = backend(which).polyline_action(np.asarray(x, dtype=np.float64), form, minima, sr, st)
    return float(val), np.asarray(grad)


def face_distances(points, faces, axes, spacing, lengths, which: str | None = None):
    """Distance from each point to the nearest axis-aligned grid face on the torus."""
    return np.asarray(backend(which).face_distances(points, faces, axes, spacing, lengths))


def max_pair_distance(points, lengths, which: str | None = None) -> float:
    """Largest periodic distance between any two of ``points``."""
    return float(backend(which).max_pair_distance(points, lengths))
