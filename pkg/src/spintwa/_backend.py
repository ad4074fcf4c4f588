"""Choose the stepping kernel at import time.

The compiled extension is preferred; ``SPINTWA_BACKEND=python`` forces the
numpy fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

try:
    from . import _kernel
except ImportError:  # extension not built
    _kernel = None


def _compiled_advance(x, noise, dt, kinds, site_a, site_b, params, woff, k, literal,
                      alive, clamps, bound):
    _kernel.advance(x.view(np.float64), noise, float(dt), kinds, site_a, site_b, params, woff,
                    float(k), int(literal), alive, clamps, float(bound))


def available_backends() -> list:
    return (["compiled"] if _kernel is not None else []) + ["python"]


def get_advance(name: str | None = None):
    """Return ``(name, advance)`` for the requested or default backend."""
    if name is None:
        name = os.environ.get("SPINTWA_BACKEND", "auto")
    if name == "auto":
        name = "compiled" if _kernel is not None else "python"
    if name == "compiled":
        if _kernel is None:
            raise RuntimeError("compiled kernel is not available; reinstall with Cython present")
        return name, _compiled_advance
    if name == "python":
        return name, _fallback.advance
    raise ValueError(f"unknown backend {name!r}")


BACKEND, advance = get_advance()
