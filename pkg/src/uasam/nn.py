"""Small parameterized layers built on the engine: linear, MLP, norm, attention."""

import math

import numpy as np

from .engine import Tensor, layer_norm, softmax
from .engine import conv2d as conv2d_op


class Linear:
    """Dense layer y = x @ w + b with fan-in scaled normal init."""

    def __init__(self, store, name: str, d_in: int, d_out: int, rng=None,
                 zero_init: bool = False, bias: bool = True):
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = rng.normal((d_in, d_out)) / math.sqrt(d_in)
        self.w = store.add(name + ".w", w)
        self.b = store.add(name + ".b", np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.w
        if self.b is not None:
            y = y + self.b
        return y


class Mlp:
    """Two-layer perceptron over the last axis."""

    def __init__(self, store, name: str, d_in: int, d_hidden: int, d_out: int,
                 rng, act: str = "gelu"):
        self.fc1 = Linear(store, name + ".fc1", d_in, d_hidden, rng)
        self.fc2 = Linear(store, name + ".fc2", d_hidden, d_out, rng)
        self.act = act

    def __call__(self, x: Tensor) -> Tensor:
        h = self.fc1(x)
        h = h.gelu() if self.act == "gelu" else h.relu()
        return self.fc2(h)


class LayerNorm:
    def __init__(self, store, name: str, dim: int, eps: float = 1e-5):
        self.g = store.add(name + ".g", np.ones(dim))
        self.b = store.add(name + ".b", np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.g, self.b, self.eps)


class MultiHeadAttention:
    """Standard scaled dot-product attention; query and key/value streams
    may differ (cross attention)."""

    def __init__(self, store, name: str, dim: int, num_heads: int, rng):
        if dim % num_heads:
            raise ValueError(f"{name}: dim {dim} not divisible by heads {num_heads}")
        self.dim = dim
        self.heads = num_heads
        self.dh = dim // num_heads
        self.wq = Linear(store, name + ".wq", dim, dim, rng)
        self.wk = Linear(store, name + ".wk", dim, dim, rng)
        self.wv = Linear(store, name + ".wv", dim, dim, rng)
        self.wo = Linear(store, name + ".wo", dim, dim, rng)

    def _split(self, x: Tensor, b: int, n: int) -> Tensor:
        return x.reshape(b, n, self.heads, self.dh).transpose(0, 2, 1, 3)

    def __call__(self, xq: Tensor, xkv: Tensor) -> Tensor:
        b, nq, _ = xq.shape
        nk = xkv.shape[1]
        q = self._split(self.wq(xq), b, nq)
        k = self._split(self.wk(xkv), b, nk)
        v = self._split(self.wv(xkv), b, nk)
        attn = softmax((q * (1.0 / math.sqrt(self.dh))) @ k.transpose(0, 1, 3, 2))
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, nq, self.dim)
        return self.wo(out)


class Conv2d:
    """NCHW convolution with square kernel."""

    def __init__(self, store, name: str, c_in: int, c_out: int, k: int, rng,
                 stride: int = 1, padding: int = 0):
        w = rng.normal((c_out, c_in, k, k)) / math.sqrt(c_in * k * k)
        self.w = store.add(name + ".w", w)
        self.b = store.add(name + ".b", np.zeros(c_out))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d_op(x, self.w, self.b, stride=self.stride,
                         padding=self.padding)
