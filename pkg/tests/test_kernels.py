import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipfsi import _kernels
from slipfsi._kernels import _pykernels
from slipfsi.grid import AnnulusGrid, locate

needs_ext = pytest.mark.skipif(_kernels._ext is None, reason="compiled kernels not built")


def _coeffs(g, rng):
    shapes = [(2, 2), (2,), (2, 2, 2), (2, 2), (2, 2, 2), (2,), (2, 2)]
    return [np.ascontiguousarray(rng.standard_normal(s + g.shape)) for s in shapes]


@needs_ext
@settings(max_examples=15, deadline=None)
@given(st.integers(8, 20), st.integers(8, 24), st.integers(0, 2**31), st.floats(0.01, 2.0))
def test_transformed_rhs_backends_agree(nr, nt, seed, mu):
    g = AnnulusGrid(nr, nt, 0.5, 1.5)
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((2, nr + 2, nt))
    co = _coeffs(g, rng)
    args = (U, g.hr, g.d1_den, g.d2_den, g.inv_r, g.cos, g.sin, *co, mu)
    a = _pykernels.transformed_rhs(*args)
    b = _kernels._ext.transformed_rhs(*args, 1)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.max(np.abs(a)))


@needs_ext
def test_transformed_rhs_thread_count_irrelevant():
    g = AnnulusGrid(16, 32, 0.5, 1.5)
    rng = np.random.default_rng(3)
    U = rng.standard_normal((2, 18, 32))
    args = (U, g.hr, g.d1_den, g.d2_den, g.inv_r, g.cos, g.sin, *_coeffs(g, rng), 0.1)
    assert np.array_equal(_kernels._ext.transformed_rhs(*args, 1), _kernels._ext.transformed_rhs(*args, 4))


@needs_ext
@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_bilinear_backends_agree(seed):
    rng = np.random.default_rng(seed)
    g = AnnulusGrid(12, 24, 0.5, 1.5)
    pts = rng.uniform(-1.4, 1.4, (60, 2))
    pts = pts[(np.hypot(*pts.T) > 0.5) & (np.hypot(*pts.T) < 1.5)]
    fr, ft = locate(g, pts)
    v = rng.standard_normal((3,) + g.shape)
    a = _pykernels.bilinear_polar(v, fr, ft, g.n_r, g.n_theta)
    b = _kernels._ext.bilinear_polar(v, fr, ft, g.n_r, g.n_theta)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_pure_python_fallback_selected_by_env():
    env = dict(os.environ, SLIPFSI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import slipfsi; print(slipfsi.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")
