"""Backend parity: the compiled kernels must match the numpy fallback
bit-for-bit on every geometry the model uses."""

import numpy as np
import pytest

from pathroute.kernels import fallback

try:
    from pathroute.kernels import _convext
except ImportError:
    _convext = None

GEOMETRIES = [
    # (k, stride, pad, dilation, input shape)
    (3, 1, 1, 1, (2, 3, 9, 9)),
    (3, 1, 1, 1, (1, 16, 63, 63)),
    (3, 2, 1, 1, (1, 16, 63, 63)),   # pathfinder stride
    (3, 2, 1, 1, (1, 8, 32, 32)),
    (3, 1, 2, 2, (1, 4, 15, 15)),    # dilated mixed-task paths
    (3, 1, 3, 3, (2, 2, 12, 12)),
    (1, 1, 0, 1, (2, 5, 8, 8)),
    (5, 1, 2, 1, (1, 3, 11, 11)),
    (3, 1, 1, 1, (1, 1, 9, 9)),
]


def test_im2col_shape():
    x = np.zeros((2, 4, 10, 10), dtype=np.float32)
    cols = fallback.im2col(x, 3, 1, 1, 1)
    assert cols.shape == (2, 4 * 9, 100)


def test_im2col_values_against_direct_loop():
    # brute-force window gather as the oracle
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
    cols = fallback.im2col(x, 3, 1, 1, 1)
    for r in range(5):
        for c in range(5):
            for ch in range(2):
                for i in range(3):
                    for j in range(3):
                        hi, wi = r + i - 1, c + j - 1
                        want = x[0, ch, hi, wi] if 0 <= hi < 5 and 0 <= wi < 5 else 0.0
                        assert cols[0, (ch * 3 + i) * 3 + j, r * 5 + c] == want


def test_col2im_is_adjoint_of_im2col():
    # <im2col(x), g> == <x, col2im(g)> for random x, g
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.standard_normal((1, 3, 7, 7))
        cols = fallback.im2col(x, 3, 1, 1, 1)
        g = rng.standard_normal(cols.shape)
        lhs = float((cols * g).sum())
        rhs = float((x * fallback.col2im(g, x.shape, 3, 1, 1, 1)).sum())
        assert abs(lhs - rhs) < 1e-9


@pytest.mark.skipif(_convext is None, reason="compiled extension not built")
@pytest.mark.parametrize("k,stride,pad,dil,shape", GEOMETRIES)
def test_backend_parity(k, stride, pad, dil, shape):
    rng = np.random.default_rng(hash((k, stride, pad, dil)) % 2**32)
    for dtype in (np.float32, np.float64):
        x = rng.standard_normal(shape).astype(dtype)
        a = fallback.im2col(x, k, stride, pad, dil)
        b = _convext.im2col(x, k, stride, pad, dil)
        assert a.dtype == b.dtype and np.array_equal(a, b)
        g = rng.standard_normal(a.shape).astype(dtype)
        ca = fallback.col2im(g, shape, k, stride, pad, dil)
        cb = _convext.col2im(g, shape, k, stride, pad, dil)
        assert np.array_equal(ca, cb)
