"""Select the compiled core or the pure-Python fallback at import time.

Set ``LILCHAIN_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _core_py

if os.environ.get("LILCHAIN_PURE_PYTHON", "") not in ("", "0"):
    core = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as core  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        core = _core_py
        BACKEND = "python"

__all__ = ["core", "BACKEND", "_core_py"]
