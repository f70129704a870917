"""Differentiable operations: the layer set the restoration network and
its pathfinder need, plus a little scalar glue for composing losses.

Convolution runs as im2col + one GEMM; the gather/scatter lives in
``pathroute.kernels`` (compiled when available).  Every op's backward is
checked against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .autograd import Tensor, make_node
from .errors import ConfigError, NumericError


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0,
           dilation: int = 1) -> Tensor:
    """2-D convolution over a (B, C, H, W) tensor.

    weight is (out_ch, in_ch, k, k) with k odd; bias is (out_ch,).
    Output spatial size is floor((H + 2*pad - dilation*(k-1) - 1)/stride) + 1.
    """
    if x.data.ndim != 4:
        raise ConfigError(f"conv2d: input must be 4-D, got {x.shape}")
    o, ci, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ConfigError(f"conv2d: kernel must be square and odd, got {k}x{k2}")
    if ci != x.shape[1]:
        raise ConfigError(f"conv2d: weight expects {ci} input channels, input has {x.shape[1]}")
    if bias.shape != (o,):
        raise ConfigError(f"conv2d: bias shape {bias.shape} != ({o},)")

    b, _, h, w = x.shape
    span = dilation * (k - 1) + 1
    ho = (h + 2 * padding - span) // stride + 1
    wo = (w + 2 * padding - span) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ConfigError(f"conv2d: {h}x{w} input too small for this kernel geometry")

    cols = kernels.im2col(x.data, k, stride, padding, dilation)  # (B, Ci*k*k, Ho*Wo)
    w2 = weight.data.reshape(o, -1)
    if b == 1:
        # plain 2-D GEMMs beat the batched matmul path for the unit batch
        y = (w2 @ cols[0] + bias.data[:, None]).reshape(b, o, ho, wo)
    else:
        y = (np.matmul(w2, cols) + bias.data[:, None]).reshape(b, o, ho, wo)
    if not np.isfinite(y.sum()):
        raise NumericError("conv2d: non-finite output")

    def backward(g):
        gf = g.reshape(b, o, ho * wo)
        if b == 1:
            gw = (gf[0] @ cols[0].T).reshape(weight.shape)
            gcols = (w2.T @ gf[0])[None]
        else:
            gw = np.matmul(gf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
            gcols = np.matmul(w2.T, gf)
        gb = gf.sum(axis=(0, 2))
        gx = kernels.col2im(gcols, x.shape, k, stride, padding, dilation)
        return gx, gw, gb

    return make_node(y, (x, weight, bias), backward)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is taken as 0."""
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return make_node(np.where(mask, x.data, 0), (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map of a (B, Din) batch: x @ weight.T + bias, weight (Dout, Din)."""
    if x.data.ndim != 2:
        raise ConfigError(f"linear: input must be 2-D, got {x.shape}")
    dout, din = weight.shape
    if din != x.shape[1]:
        raise ConfigError(f"linear: weight expects {din} features, input has {x.shape[1]}")
    y = x.data @ weight.data.T + bias.data

    def backward(g):
        return g @ weight.data, g.T @ x.data, g.sum(axis=0)

    return make_node(y, (x, weight, bias), backward)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_step(x: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor, b: Tensor):
    """One step of a gated recurrent cell.

    Gate order in the stacked weights is [input, forget, candidate,
    output]; wx is (4H, Din), wh is (4H, H), b is (4H,).  Returns
    (h_next, c_next), both differentiable through time: c_next carries
    the cell update and h_next is built on top of it, so gradient flows
    through chained steps.
    """
    hid = h.shape[1]
    if c.shape != h.shape:
        raise ConfigError(f"lstm_step: h {h.shape} vs c {c.shape}")
    if wx.shape[0] != 4 * hid or wh.shape != (4 * hid, hid) or b.shape != (4 * hid,):
        raise ConfigError("lstm_step: gate weight extents do not match hidden size")

    z = x.data @ wx.data.T + h.data @ wh.data.T + b.data
    zi, zf, zg, zo = np.split(z, 4, axis=1)
    gi, gf_, go = _sigmoid(zi), _sigmoid(zf), _sigmoid(zo)
    gg = np.tanh(zg)
    c_new = gf_ * c.data + gi * gg
    t = np.tanh(c_new)
    h_new = go * t

    def dz_to_parents(dz):
        gx = dz @ wx.data
        gh = dz @ wh.data
        gwx = dz.T @ x.data
        gwh = dz.T @ h.data
        gb = dz.sum(axis=0)
        return gx, gh, gwx, gwh, gb

    def backward_c(gc):
        # gc is the total gradient on c_new: the h_new node below has
        # already deposited its tanh'(c_new) contribution here.
        di = gc * gg * gi * (1 - gi)
        df = gc * c.data * gf_ * (1 - gf_)
        dg = gc * gi * (1 - gg * gg)
        dz = np.concatenate([di, df, dg, np.zeros_like(di)], axis=1)
        gx, gh, gwx, gwh, gb = dz_to_parents(dz)
        return gx, gh, gc * gf_, gwx, gwh, gb

    c_node = make_node(c_new, (x, h, c, wx, wh, b), backward_c)

    def backward_h(gh_out):
        do = gh_out * t * go * (1 - go)
        dz = np.concatenate([np.zeros_like(do), np.zeros_like(do), np.zeros_like(do), do], axis=1)
        gx, gh, gwx, gwh, gb = dz_to_parents(dz)
        gc_node = gh_out * go * (1 - t * t)
        return gc_node, gx, gh, gwx, gwh, gb

    h_node = make_node(h_new, (c_node, x, h, wx, wh, b), backward_h)
    return h_node, c_node


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax of a (B, M) batch, stabilized by max-subtraction."""
    if logits.data.ndim != 2 or logits.shape[1] == 0:
        raise ConfigError(f"softmax: need a non-empty (B, M) batch, got {logits.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return make_node(p, (logits,), backward)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference, reduced to a scalar."""
    if a.shape != b.shape:
        raise ConfigError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size
    val = np.array((diff * diff).mean(), dtype=a.data.dtype)

    def backward(g):
        s = g.reshape(()) * 2.0 / n
        return s * diff, -s * diff

    return make_node(val.reshape(1), (a, b), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean: (B, C, H, W) -> (B, C)."""
    if x.data.ndim != 4:
        raise ConfigError(f"global_avg_pool: input must be 4-D, got {x.shape}")
    _, _, h, w = x.shape

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).astype(g.dtype),)

    return make_node(x.data.mean(axis=(2, 3)), (x,), backward)


def pick(x: Tensor, indices) -> Tensor:
    """Select one entry per row of a (B, M) batch: out[i] = x[i, indices[i]]."""
    idx = np.asarray(indices, dtype=np.intp)
    rows = np.arange(x.shape[0])

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[rows, idx] = g
        return (gx,)

    return make_node(x.data[rows, idx], (x,), backward)


def log(x: Tensor) -> Tensor:
    """Elementwise natural log."""
    def backward(g):
        return (g / x.data,)

    return make_node(np.log(x.data), (x,), backward)


def add(a: Tensor, b) -> Tensor:
    """Add two same-shape tensors, or a scalar to a tensor."""
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ConfigError(f"add: shape mismatch {a.shape} vs {b.shape}")

        def backward(g):
            return g, g

        return make_node(a.data + b.data, (a, b), backward)

    def backward_s(g):
        return (g,)

    return make_node(a.data + float(b), (a,), backward_s)


def scale(x: Tensor, s: float) -> Tensor:
    """Multiply by a python scalar (constant, not differentiated)."""
    s = float(s)

    def backward(g):
        return (g * s,)

    return make_node(x.data * s, (x,), backward)


def total(x: Tensor) -> Tensor:
    """Sum all entries to a scalar."""
    def backward(g):
        return (np.broadcast_to(g.reshape(()), x.shape).astype(g.dtype),)

    return make_node(np.array([x.data.sum()], dtype=x.data.dtype), (x,), backward)
