"""Kernel selection.

The compiled extension is used when it imports; otherwise, or when
``ZOIBMED_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
numpy fallback is used.
"""
import os

from . import _fallback

_force_python = os.environ.get("ZOIBMED_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure-python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

NAME = "compiled" if _compiled is not None else "python"
kernels = BACKENDS[NAME]


def get(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
