"""Adam parameter updates with bias correction."""

from __future__ import annotations

import numpy as np

from .autograd import Parameter
from .errors import UsageError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def adam_update(param: Parameter, lr: float):
    """One Adam step on a parameter whose gradient is populated.

    Mutates value, first/second moment estimates, and increments the
    step counter by exactly one.
    """
    g = param.value.grad
    if g is None:
        raise UsageError(f"adam_update: parameter {param.name!r} has no gradient")
    param.step += 1
    param.adam_m *= BETA1
    param.adam_m += (1.0 - BETA1) * g
    param.adam_v *= BETA2
    param.adam_v += (1.0 - BETA2) * (g * g)
    m_hat = param.adam_m / (1.0 - BETA1 ** param.step)
    v_hat = param.adam_v / (1.0 - BETA2 ** param.step)
    param.value.data -= lr * m_hat / (np.sqrt(v_hat) + EPS)


def adam_step(params, lr: float, ascent: bool = False):
    """Adam over a parameter list; skips parameters that saw no gradient.

    ``ascent=True`` flips the gradient sign first (policy-gradient
    updates maximize the expected return).
    """
    for p in params:
        if p.value.grad is None:
            continue
        if ascent:
            np.negative(p.value.grad, out=p.value.grad)
        adam_update(p, lr)


def gradient_ascent_step(params, lr: float):
    """Plain theta += lr * grad, no moment estimates."""
    for p in params:
        if p.value.grad is None:
            continue
        p.value.data += lr * p.value.grad
