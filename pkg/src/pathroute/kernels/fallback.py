"""Pure-numpy im2col / col2im, the fallback when the compiled extension
is not built.  Same signatures and bit-identical results as the Cython
versions in ``_convext.pyx``."""

import numpy as np


def im2col(x, k, stride, pad, dilation):
    """Gather sliding kxk windows of a (B, C, H, W) array into a
    (B, C*k*k, Ho*Wo) patch matrix ready for a single GEMM.

    Window (i, j) of output position (r, c) reads input pixel
    (r*stride + i*dilation - pad, c*stride + j*dilation - pad);
    out-of-range reads are zero.
    """
    b, c, h, w = x.shape
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    span = dilation * (k - 1) + 1
    ho = (h + 2 * pad - span) // stride + 1
    wo = (w + 2 * pad - span) // stride + 1
    sb, sc, sh, sw = x.strides
    win = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, k, k, ho, wo),
        strides=(sb, sc, dilation * sh, dilation * sw, stride * sh, stride * sw),
        writeable=False,
    )
    return np.ascontiguousarray(win.reshape(b, c * k * k, ho * wo))


def col2im(cols, x_shape, k, stride, pad, dilation):
    """Scatter-add a (B, C*k*k, Ho*Wo) patch matrix back onto the
    (B, C, H, W) input grid; the adjoint of :func:`im2col`."""
    b, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    span = dilation * (k - 1) + 1
    ho = (hp - span) // stride + 1
    wo = (wp - span) // stride + 1
    out = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(b, c, k, k, ho, wo)
    for i in range(k):
        hs = i * dilation
        for j in range(k):
            ws = j * dilation
            out[:, :, hs : hs + stride * ho : stride, ws : ws + stride * wo : stride] += cols[:, :, i, j]
    if pad > 0:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)
