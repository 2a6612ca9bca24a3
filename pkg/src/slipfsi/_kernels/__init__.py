"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
fallback. ``SLIPFSI_PURE_PYTHON=1`` forces the fallback and
``SLIPFSI_THREADS`` bounds the data-parallel width of the compiled kernels.
"""

import os

from . import _pykernels

BACKEND = "python"
_ext = None

if os.environ.get("SLIPFSI_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _ext

        BACKEND = "cython"
    except ImportError:
        _ext = None


def num_threads():
    try:
        n = int(os.environ.get("SLIPFSI_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def bilinear_polar(values, fr, ft, n_r, n_theta):
    if _ext is not None:
        return _ext.bilinear_polar(values, fr, ft, n_r, n_theta)
    return _pykernels.bilinear_polar(values, fr, ft, n_r, n_theta)


def transformed_rhs(Up, hr, d1den, d2den, inv_r, cos, sin,
                    gup, dg, Bc, Cc, Gam, Yd, Em, mu):
    if _ext is not None:
        return _ext.transformed_rhs(Up, hr, d1den, d2den, inv_r, cos, sin,
                                    gup, dg, Bc, Cc, Gam, Yd, Em, mu, num_threads())
    return _pykernels.transformed_rhs(Up, hr, d1den, d2den, inv_r, cos, sin,
                                      gup, dg, Bc, Cc, Gam, Yd, Em, mu)
