"""Kernel dispatch: compiled Cython core when importable, numpy otherwise.

Set ``CGSNN_PURE_PYTHON=1`` to force the numpy kernels.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CGSNN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py

multi_forward = _impl.multi_forward
multi_backward = _impl.multi_backward
causal_forward = _impl.causal_forward
causal_backward = _impl.causal_backward
