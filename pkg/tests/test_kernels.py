import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prunelab import _kernels_py, kernels

compiled = pytest.importorskip("prunelab._kernels", reason="compiled extension not built")


@st.composite
def conv_case(draw):
    n, c = draw(st.integers(1, 3)), draw(st.integers(1, 3))
    k = draw(st.integers(1, 3))
    pad = draw(st.integers(0, 2))
    stride = draw(st.integers(1, 3))
    h = draw(st.integers(max(1, k - 2 * pad), 7))
    w = draw(st.integers(max(1, k - 2 * pad), 7))
    dtype = draw(st.sampled_from([np.float32, np.float64]))
    seed = draw(st.integers(0, 2**16))
    x = np.random.default_rng(seed).standard_normal((n, c, h, w)).astype(dtype)
    return x, k, stride, pad


@given(conv_case())
def test_im2col_backends_agree(case):
    x, k, stride, pad = case
    a = _kernels_py.im2col(x, k, k, stride, pad)
    b = compiled.im2col(x, k, k, stride, pad)
    assert a.dtype == b.dtype and a.tobytes() == b.tobytes()


@given(conv_case())
def test_col2im_backends_agree(case):
    x, k, stride, pad = case
    cols = _kernels_py.im2col(x, k, k, stride, pad)
    cols = np.random.default_rng(0).standard_normal(cols.shape).astype(x.dtype)
    a = _kernels_py.col2im(cols, x.shape, k, k, stride, pad)
    b = compiled.col2im(cols, x.shape, k, k, stride, pad)
    assert a.tobytes() == b.tobytes()


@given(st.integers(1, 3), st.integers(1, 3), st.integers(2, 9), st.integers(1, 3), st.integers(0, 2**16),
       st.booleans())
def test_maxpool_backends_agree(n, c, hw, size, seed, ties):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 3, (n, c, hw, hw)) if ties else rng.standard_normal((n, c, hw, hw))
    x = x.astype(np.float32)
    size = min(size, hw)
    out_a, arg_a = _kernels_py.maxpool_forward(x, size, size)
    out_b, arg_b = compiled.maxpool_forward(x, size, size)
    assert out_a.tobytes() == out_b.tobytes()
    np.testing.assert_array_equal(arg_a, arg_b)
    g = rng.standard_normal(out_a.shape).astype(np.float32)
    assert _kernels_py.maxpool_backward(g, arg_a, x.shape).tobytes() == \
        compiled.maxpool_backward(g, arg_b, x.shape).tobytes()


def test_im2col_col2im_adjoint():
    # <im2col(x), c> == <x, col2im(c)>
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 6, 5))
    cols = _kernels_py.im2col(x, 3, 3, 2, 1)
    c = rng.standard_normal(cols.shape)
    lhs = float((cols * c).sum())
    rhs = float((x * _kernels_py.col2im(c, x.shape, 3, 3, 2, 1)).sum())
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_maxpool_first_maximum_wins():
    x = np.ones((1, 1, 2, 2), dtype=np.float32)
    out, arg = _kernels_py.maxpool_forward(x, 2, 2)
    assert out.item() == 1.0 and arg.item() == 0


def test_default_backend_is_compiled():
    assert kernels.BACKEND == "compiled"


def test_environment_forces_fallback():
    env = dict(os.environ, PRUNELAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import prunelab; print(prunelab.KERNEL_BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
