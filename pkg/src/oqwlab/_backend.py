"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy
kernels stand in.  ``OQW_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import importlib
import os

from oqwlab import _pykernels


def _load_compiled():
    try:
        return importlib.import_module("oqwlab._ckernels")
    except ImportError:
        return None


_compiled = _load_compiled()


def get_kernels(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default picks the fastest available."""
    name = name or os.environ.get("OQW_BACKEND")
    if name is None:
        return _compiled or _pykernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]
