"""Backend selection for the simulation core.

The compiled core (``_csim``) is used when importable; set
``QADAPTIVE_BACKEND=python`` to force the pure-Python core.
"""
from __future__ import annotations

import os

from . import _pysim

try:
    from . import _csim
except ImportError:  # extension not built
    _csim = None

BACKENDS = {"python": _pysim.Simulator}
if _csim is not None:
    BACKENDS["cython"] = _csim.Simulator


def default_backend():
    forced = os.environ.get("QADAPTIVE_BACKEND", "").strip().lower()
    if forced:
        if forced not in BACKENDS:
            raise RuntimeError(f"QADAPTIVE_BACKEND={forced!r} unavailable; have {sorted(BACKENDS)}")
        return forced
    return "cython" if "cython" in BACKENDS else "python"


def make_simulator(setup, backend=None):
    name = backend or default_backend()
    if name == "auto":
        name = default_backend()
    try:
        cls = BACKENDS[name]
    except KeyError:
        raise RuntimeError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
    return cls(setup)
