"""Search back end selection: the compiled kernel when built, else pure Python."""

from __future__ import annotations

import math
import os

from . import _fallback
from ._fallback import Families, LazyTree, child_key, unit

try:
    if os.environ.get("BRWEXPLODE_PURE_PYTHON"):
        raise ImportError("pure Python requested")
    from . import _kernels
except ImportError:
    _kernels = None

BACKEND = "cython" if _kernels is not None else "python"


def search(Z, W, root: int, depth: int, budget: int, cap: float, bound: float = math.inf,
           backend: str | None = None):
    """Exact per-level minimal path weights; see ``_fallback.search``."""
    backend = backend or BACKEND
    zs, ws = Z.kernel_spec(), W.kernel_spec()
    if backend == "cython" and _kernels is not None and zs is not None and ws is not None:
        return _kernels.search(zs[0], zs[1], ws[0], ws[1], float(cap), root, depth, budget, bound)
    if backend not in ("cython", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    return _fallback.search(Families(Z, W, cap), root, depth, budget, bound)


def beam(Z, W, root: int, depth: int, width: int, cap: float, backend: str | None = None):
    """Beam upper bounds on the level minima; see ``_fallback.beam``."""
    backend = backend or BACKEND
    zs, ws = Z.kernel_spec(), W.kernel_spec()
    if backend == "cython" and _kernels is not None and zs is not None and ws is not None:
        return _kernels.beam(zs[0], zs[1], ws[0], ws[1], float(cap), root, depth, width)
    if backend not in ("cython", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    return _fallback.beam(Families(Z, W, cap), root, depth, width)


__all__ = ["BACKEND", "Families", "LazyTree", "beam", "child_key", "search", "unit"]
