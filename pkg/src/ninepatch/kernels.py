"""Kernel lane selection.

The compiled lane (``ninepatch._cykernels``) is used when importable, the
numpy lane otherwise.  ``NINEPATCH_KERNELS`` overrides: ``auto`` (default),
``cython`` (require the extension), or ``numpy``.  Both lanes are
bit-identical; see ``bench/kernel_bench.py`` for the speed comparison.
"""

from __future__ import annotations

import os

import numpy as np

from . import _npkernels

_choice = os.environ.get("NINEPATCH_KERNELS", "auto").strip().lower()
if _choice not in {"auto", "cython", "numpy"}:
    raise ImportError(
        f"NINEPATCH_KERNELS={_choice!r} is not one of auto/cython/numpy")

if _choice == "numpy":
    _impl = _npkernels
    BACKEND = "numpy"
else:
    try:
        from . import _cykernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "NINEPATCH_KERNELS=cython but the compiled extension is not "
                "available; build it with `python setup.py build_ext --inplace`")
        _impl = _npkernels
        BACKEND = "numpy"


def _as_float2d(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float64)


def convolve_padded(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.asarray(_impl.convolve_padded(_as_float2d(padded), _as_float2d(kernel)))


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    return np.asarray(_impl.bilinear_resize(_as_float2d(img), out_h, out_w))


def nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return np.asarray(
        _impl.nonmax_suppress(_as_float2d(mag), _as_float2d(gx), _as_float2d(gy)))


def hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    out = _impl.hysteresis(
        np.ascontiguousarray(strong, dtype=bool),
        np.ascontiguousarray(weak, dtype=bool))
    return np.asarray(out, dtype=bool)
