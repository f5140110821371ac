"""Backend selection for the per-path scan kernels.

The compiled extension ``bsdelab._scan`` is used when it imports; otherwise,
or when ``BSDELAB_PURE_PYTHON=1`` is set, the pure-Python twins in
``bsdelab._scan_py`` are used. Both produce identical results.
"""

import os

from . import _scan_py

BACKEND = "python"
_impl = _scan_py

if os.environ.get("BSDELAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _scan as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _scan_py

first_at_least = _impl.first_at_least
run_segments = _impl.run_segments
window_scan = _impl.window_scan

__all__ = ["BACKEND", "first_at_least", "run_segments", "window_scan"]
