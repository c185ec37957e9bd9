"""Pure-numpy implementations of the hot kernels.

These are the fallback backend when the compiled extension is unavailable,
and the reference the extension is benchmarked and tested against.  All
arrays are C-contiguous float64; elementwise kernels take flat views,
row-wise kernels take (rows, n) views over the reduction axis.
"""

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_bwd(x, g):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return g * (cdf + x * pdf)


def softmax_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y, g):
    dot = (g * y).sum(axis=1, keepdims=True)
    return y * (g - dot)


def layernorm_fwd(x, gamma, beta, eps):
    mu = x.mean(axis=1)
    xc = x - mu[:, None]
    var = (xc * xc).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = xc * rstd[:, None] * gamma + beta
    return y, mu, rstd


def layernorm_bwd(x, mu, rstd, gamma, g):
    xhat = (x - mu[:, None]) * rstd[:, None]
    gg = g * gamma
    m1 = gg.mean(axis=1, keepdims=True)
    m2 = (gg * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gg - m1 - xhat * m2)
    dgamma = (g * xhat).sum(axis=0)
    dbeta = g.sum(axis=0)
    return gx, dgamma, dbeta


def adam_update(p, g, m, v, lr, beta1, beta2, eps, t):
    """One Adam step, in place on p, m, v (flat float64 views)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
