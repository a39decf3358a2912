"""Kernel backend selection: compiled extension when available, numpy otherwise."""

from __future__ import annotations

from . import _kernels_py

try:
    from . import _kernels_cy

    _DEFAULT = _kernels_cy
except ImportError:  # extension not built; fall back silently
    _kernels_cy = None
    _DEFAULT = _kernels_py


def get_backend(name: str | None = None):
    """Return a kernel module by name ('cython' | 'numpy' | None=auto)."""
    if name is None or name == "auto":
        return _DEFAULT
    if name == "numpy":
        return _kernels_py
    if name == "cython":
        if _kernels_cy is None:
            raise RuntimeError("compiled kernels are not available")
        return _kernels_cy
    raise ValueError(f"unknown kernel backend: {name!r}")


def backend_name() -> str:
    return _DEFAULT.BACKEND


def available_backends() -> list[str]:
    names = ["numpy"]
    if _kernels_cy is not None:
        names.insert(0, "cython")
    return names
