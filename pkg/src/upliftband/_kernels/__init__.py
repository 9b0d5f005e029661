"""Kernel backend selection.

The compiled Cython kernel is used when its extension module was built;
otherwise the pure-numpy reference takes over. Set ``UPLIFTBAND_FORCE_NUMPY=1``
to force the fallback (the benchmark and the parity tests use this).

Both backends are deterministic and consume no randomness, so backend
choice never changes results.
"""

from __future__ import annotations

import os

from . import _reference

BACKEND = "numpy"
curve_gains_from_counts = _reference.curve_gains_from_counts

if os.environ.get("UPLIFTBAND_FORCE_NUMPY", "0") in ("", "0"):
    try:
        from . import _fast

        curve_gains_from_counts = _fast.curve_gains_from_counts
        BACKEND = "cython"
    except ImportError:
        pass


def available_backends() -> dict[str, object]:
    """Name -> kernel callable for every importable backend."""
    impls: dict[str, object] = {"numpy": _reference.curve_gains_from_counts}
    try:
        from . import _fast

        impls["cython"] = _fast.curve_gains_from_counts
    except ImportError:
        pass
    return impls
