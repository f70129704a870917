# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col / col2im kernels.

These are the gather/scatter halves of the convolution hot path; the
GEMM itself stays in numpy (BLAS) for both backends.  Padding is
handled by splitting each output row into zero-filled border segments
and a branch-free interior copy, so the compiler can vectorize the
inner loops.
"""
import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
def _im2col_impl(floating[:, :, :, ::1] x, floating[:, :, ::1] cols,
                 int k, int stride, int pad, int dilation):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int span = dilation * (k - 1) + 1
    cdef Py_ssize_t ho = (h + 2 * pad - span) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - span) // stride + 1
    cdef Py_ssize_t n, ch, i, j, r, col, hi, row, base
    cdef Py_ssize_t lo, hi_col
    with nogil:
        for n in range(b):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        row = (ch * k + i) * k + j
                        base = j * dilation - pad
                        # valid columns: 0 <= base + col*stride < w
                        lo = 0
                        while lo < wo and base + lo * stride < 0:
                            lo += 1
                        hi_col = wo
                        while hi_col > lo and base + (hi_col - 1) * stride >= w:
                            hi_col -= 1
                        for r in range(ho):
                            hi = r * stride + i * dilation - pad
                            if hi < 0 or hi >= h:
                                for col in range(wo):
                                    cols[n, row, r * wo + col] = 0.0
                                continue
                            for col in range(lo):
                                cols[n, row, r * wo + col] = 0.0
                            if stride == 1:
                                for col in range(lo, hi_col):
                                    cols[n, row, r * wo + col] = x[n, ch, hi, base + col]
                            else:
                                for col in range(lo, hi_col):
                                    cols[n, row, r * wo + col] = x[n, ch, hi, base + col * stride]
                            for col in range(hi_col, wo):
                                cols[n, row, r * wo + col] = 0.0


@cython.boundscheck(False)
@cython.wraparound(False)
def _col2im_impl(floating[:, :, ::1] cols, floating[:, :, :, ::1] out,
                 int k, int stride, int pad, int dilation):
    cdef Py_ssize_t b = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef int span = dilation * (k - 1) + 1
    cdef Py_ssize_t ho = (h + 2 * pad - span) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - span) // stride + 1
    cdef Py_ssize_t n, ch, i, j, r, col, hi, row, base, lo, hi_col
    with nogil:
        for n in range(b):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        row = (ch * k + i) * k + j
                        base = j * dilation - pad
                        lo = 0
                        while lo < wo and base + lo * stride < 0:
                            lo += 1
                        hi_col = wo
                        while hi_col > lo and base + (hi_col - 1) * stride >= w:
                            hi_col -= 1
                        for r in range(ho):
                            hi = r * stride + i * dilation - pad
                            if hi < 0 or hi >= h:
                                continue
                            if stride == 1:
                                for col in range(lo, hi_col):
                                    out[n, ch, hi, base + col] += cols[n, row, r * wo + col]
                            else:
                                for col in range(lo, hi_col):
                                    out[n, ch, hi, base + col * stride] += cols[n, row, r * wo + col]


def im2col(x, int k, int stride, int pad, int dilation):
    """See ``fallback.im2col``; identical contract."""
    b, c, h, w = x.shape
    span = dilation * (k - 1) + 1
    ho = (h + 2 * pad - span) // stride + 1
    wo = (w + 2 * pad - span) // stride + 1
    x = np.ascontiguousarray(x)
    if x.dtype not in (np.float32, np.float64):
        raise TypeError(f"im2col: unsupported dtype {x.dtype}")
    cols = np.empty((b, c * k * k, ho * wo), dtype=x.dtype)
    _im2col_impl(x, cols, k, stride, pad, dilation)
    return cols


def col2im(cols, x_shape, int k, int stride, int pad, int dilation):
    """See ``fallback.col2im``; identical contract."""
    cols = np.ascontiguousarray(cols)
    if cols.dtype not in (np.float32, np.float64):
        raise TypeError(f"col2im: unsupported dtype {cols.dtype}")
    out = np.zeros(x_shape, dtype=cols.dtype)
    _col2im_impl(cols, out, k, stride, pad, dilation)
    return out
