"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; set ``DBST_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _fallback

_NAMES = (
    "kwon_terms",
    "kendall_gal_terms",
    "assign_nearest",
    "min_sqdist",
    "centroid_sums",
    "confusion_counts",
)

_compiled = None
if os.environ.get("DBST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "compiled" if _compiled is not None else "python"

kwon_terms = _impl.kwon_terms
kendall_gal_terms = _impl.kendall_gal_terms
assign_nearest = _impl.assign_nearest
min_sqdist = _impl.min_sqdist
centroid_sums = _impl.centroid_sums
confusion_counts = _impl.confusion_counts


def backends():
    """Map of backend name to module for every importable implementation."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


__all__ = ["BACKEND", "backends", *_NAMES]
