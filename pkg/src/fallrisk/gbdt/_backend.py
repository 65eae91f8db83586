"""Select the tree-growing kernel: compiled extension, else numpy fallback.

Set ``FALLRISK_BACKEND=python`` to force the fallback.
"""

import os

from . import _grow_py

try:
    from . import _grow_ext
except ImportError:  # extension not built
    _grow_ext = None

_KERNELS = {"python": _grow_py.grow_tree}
if _grow_ext is not None:
    _KERNELS["cython"] = _grow_ext.grow_tree


def available() -> list[str]:
    return sorted(_KERNELS)


def default_backend() -> str:
    forced = os.environ.get("FALLRISK_BACKEND")
    if forced:
        if forced not in _KERNELS:
            raise RuntimeError(f"FALLRISK_BACKEND={forced!r} is not available ({available()})")
        return forced
    return "cython" if "cython" in _KERNELS else "python"


def get_grower(name=None):
    name = name or default_backend()
    try:
        return _KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; available: {available()}") from None


BACKEND = default_backend()
