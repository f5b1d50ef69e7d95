"""Pixel kernels with a compiled core and a pure numpy/scipy fallback.

The Cython extension is used when importable; set ``MITOVIZ_PURE_PYTHON=1``
to force the fallback. Both backends implement identical algorithms and the
test suite asserts pixel-exact agreement. ``benchmarks/bench_kernels.py``
compares their throughput.

All connectivity in this package is 4-connected (no diagonal adjacency)
except skeletons, which are 8-connected by construction.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("MITOVIZ_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "compiled"


def _as_values(values):
    return np.ascontiguousarray(values, dtype=np.float32)


def _as_mask(mask):
    return np.ascontiguousarray(mask, dtype=np.uint8)


def flood_fill(values, seed_y, seed_x, sigma, above):
    """4-connected component of the seed under ``v >= sigma`` (above) or
    ``v < sigma``; uint8 mask, empty when the seed fails the predicate."""
    return _impl.flood_fill(_as_values(values), int(seed_y), int(seed_x),
                            float(sigma), bool(above))


def flood_fill_multi(values, seeds_y, seeds_x, sigma, above):
    """Union of seeded 4-connected components over all seeds."""
    return _impl.flood_fill_multi(
        _as_values(values),
        np.ascontiguousarray(seeds_y, dtype=np.int64),
        np.ascontiguousarray(seeds_x, dtype=np.int64),
        float(sigma), bool(above))


def label4(mask):
    """(labels, count): 1-based 4-connected labels ordered by each
    component's smallest linear index."""
    return _impl.label4(_as_mask(mask))


def thin(mask):
    """Zhang-Suen skeleton (uint8)."""
    return _impl.thin(_as_mask(mask))


def geodesic_diameter(mask):
    """Longest shortest path in pixels across the mask, 8-connected steps
    costing 1 (orthogonal) and sqrt(2) (diagonal), double Dijkstra sweep.

    Skeletons are sparse, so this always runs the pure implementation; the
    distance keys are exact in both backends by construction.
    """
    return _pykernels.geodesic_diameter(_as_mask(mask))


def disc_mask(points_y, points_x, h, w, radius):
    """Pixels strictly closer than ``radius`` to any listed pixel center."""
    return _impl.disc_mask(
        np.ascontiguousarray(points_y, dtype=np.int64),
        np.ascontiguousarray(points_x, dtype=np.int64),
        int(h), int(w), float(radius))
