"""Kernel backend selection.

``STRUCTQ_BACKEND=numpy`` forces the pure NumPy kernels; the default uses
Numba when it imports and falls back to NumPy otherwise. ``use()``
switches at runtime (tests and the benchmark compare both).
"""
from __future__ import annotations

import importlib
import logging
import os
from types import ModuleType

log = logging.getLogger(__name__)

BACKENDS = ("numba", "numpy")
_current: ModuleType | None = None
_name: str | None = None


def _load(name: str) -> ModuleType:
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")
    return importlib.import_module(f"structq.neural._kernels_{name}")


def use(name: str) -> None:
    global _current, _name
    _current = _load(name)
    _name = name


def get() -> ModuleType:
    if _current is None:
        wanted = os.environ.get("STRUCTQ_BACKEND", "numba").lower()
        try:
            use(wanted)
        except ImportError:
            log.warning("numba unavailable, using numpy kernels")
            use("numpy")
    return _current


def name() -> str:
    get()
    return _name
