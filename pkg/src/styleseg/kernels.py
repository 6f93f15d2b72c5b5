"""Boundary kernels, compiled when available.

The Cython extension ``_kernels`` is preferred; ``STYLESEG_PURE_PYTHON=1``
or a failed build selects the pure-Python twin. ``BACKEND`` names the
implementation in use.
"""

import os

if os.environ.get("STYLESEG_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import convex_hull_area, polygon_length, simplify_closed, trace_boundary

    BACKEND = "python"
else:
    try:
        from ._kernels import convex_hull_area, polygon_length, simplify_closed, trace_boundary

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._kernels_py import convex_hull_area, polygon_length, simplify_closed, trace_boundary

        BACKEND = "python"

__all__ = ["BACKEND", "convex_hull_area", "polygon_length", "simplify_closed", "trace_boundary"]
