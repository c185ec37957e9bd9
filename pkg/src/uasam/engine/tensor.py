"""Dense float64 tensors with tape-based reverse-mode autodiff.

Every op validates shapes, checks its output for NaN/Inf, and (when grad
mode is on and any input is tracked) records a backward closure on a global
tape.  ``backward(loss)`` replays the tape in reverse and clears it.  Ops
never mutate their inputs' arrays.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NonFiniteError, ShapeError, TrackingError
from . import kernels

_TAPE = []
_GRAD_ENABLED = True


class no_grad:
    """Context manager that suspends tape recording (forward-only)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def tape_size() -> int:
    return len(_TAPE)


def reset_tape():
    _TAPE.clear()


class Tensor:
    """n-d float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        # ascontiguousarray would promote 0-d to 1-d; keep scalars 0-d
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has shape {self.shape}, not scalar")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic delegates to the module-level ops

    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def broadcast_to(self, shape):
        return broadcast_to(self, shape)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def relu(self):
        return relu(self)

    def gelu(self):
        return gelu(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def softplus(self):
        return softplus(self)

    def clamp(self, lo=None, hi=None):
        return clamp(self, lo, hi)

    def softmax(self):
        return softmax(self)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _finite(arr: np.ndarray, op: str):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op}: produced non-finite values")


def _push(out_data: np.ndarray, op: str, parents, backward_fn) -> Tensor:
    _finite(out_data, op)
    out = Tensor(out_data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _TAPE.append((out, tuple(parents), backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape`, inverting numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into .grad of every tracked tensor; clear tape."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", None)
        raise ShapeError(f"backward: loss must be a scalar tensor, got shape {shape}")
    if not loss.requires_grad:
        raise TrackingError("backward: loss was not produced by tracked ops")
    try:
        loss.grad = np.ones_like(loss.data)
        for out, parents, fn in reversed(_TAPE):
            if out.grad is None:
                continue
            for parent, g in zip(parents, fn(out.grad)):
                if g is None or not parent.requires_grad:
                    continue
                # never in-place: g may alias another tensor's grad
                parent.grad = g if parent.grad is None else parent.grad + g
    finally:
        _TAPE.clear()


# ---------------------------------------------------------------------------
# elementwise / arithmetic ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    out = a.data + b.data
    return _push(out, "add", (a, b), lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)
    out = a.data - b.data
    return _push(out, "sub", (a, b), lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)
    out = a.data * b.data
    return _push(out, "mul", (a, b), lambda g: (
        _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("div", a, b)
    out = a.data / b.data
    return _push(out, "div", (a, b), lambda g: (
        _unbroadcast(g / b.data, a.shape),
        _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a: Tensor) -> Tensor:
    return _push(-a.data, "neg", (a,), lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    e = float(exponent)
    out = a.data**e
    return _push(out, "pow", (a,), lambda g: (g * e * a.data ** (e - 1.0),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return _push(np.where(mask, a.data, 0.0), "relu", (a,),
                 lambda g: (g * mask,))


def gelu(a: Tensor) -> Tensor:
    flat = a.data.reshape(-1)
    out = kernels.gelu_fwd(flat).reshape(a.shape)
    return _push(out, "gelu", (a,), lambda g: (
        kernels.gelu_bwd(flat, np.ascontiguousarray(g).reshape(-1)).reshape(a.shape),))


def sigmoid(a: Tensor) -> Tensor:
    t = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))
    return _push(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _push(out, "exp", (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _push(out, "log", (a,), lambda g: (g / a.data,))


def softplus(a: Tensor) -> Tensor:
    out = np.log1p(np.exp(-np.abs(a.data))) + np.maximum(a.data, 0.0)
    t = np.exp(-np.abs(a.data))
    sig = np.where(a.data >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))
    return _push(out, "softplus", (a,), lambda g: (g * sig,))


def clamp(a: Tensor, lo=None, hi=None) -> Tensor:
    out = np.clip(a.data, lo, hi)
    inside = np.ones(a.shape, dtype=bool)
    if lo is not None:
        inside &= a.data >= lo
    if hi is not None:
        inside &= a.data <= hi
    return _push(out, "clamp", (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _push(np.ascontiguousarray(out), "reshape", (a,),
                 lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for ndim {a.ndim}")
    inverse = np.argsort(axes)
    out = np.ascontiguousarray(a.data.transpose(axes))
    return _push(out, "transpose", (a,),
                 lambda g: (np.ascontiguousarray(g.transpose(inverse)),))


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError(f"tile: cannot broadcast {a.shape} to {shape}") from None
    return _push(out, "tile", (a,), lambda g: (_unbroadcast(g, a.shape),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            i != ax and t.shape[i] != tensors[0].shape[i] for i in range(ndim)
        ):
            raise ShapeError(
                f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(
            np.ascontiguousarray(np.take(g, range(offsets[i], offsets[i + 1]), axis=ax))
            for i in range(len(tensors))
        )

    return _push(out, "concat", tensors, bwd)


def slice_(a: Tensor, idx) -> Tensor:
    out = a.data[idx]
    if not isinstance(out, np.ndarray):
        out = np.asarray(out)

    def bwd(g):
        gx = np.zeros(a.shape)
        gx[idx] = g
        return (gx,)

    return _push(np.ascontiguousarray(out), "slice", (a,), bwd)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    out = a.data.mean(axis=axes, keepdims=keepdims)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape) / count,)

    return _push(np.asarray(out), "mean", (a,), bwd)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _push(np.asarray(out), "sum", (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra / nn ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-d, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner dims differ, {a.shape} @ {b.shape} "
            f"({a.shape[-1]} vs {b.shape[-2]})")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(
            f"matmul: batch dims not broadcastable, {a.shape} @ {b.shape}") from None
    out = a.data @ b.data

    def bwd(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return _push(out, "matmul", (a, b), bwd)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    n = a.shape[-1]
    rows = a.data.reshape(-1, n)
    y = kernels.softmax_fwd(np.ascontiguousarray(rows))
    out = y.reshape(a.shape)

    def bwd(g):
        g2 = np.ascontiguousarray(g).reshape(-1, n)
        return (kernels.softmax_bwd(y, g2).reshape(a.shape),)

    return _push(out, "softmax", (a,), bwd)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis with affine parameters."""
    n = a.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(
            f"layer_norm: affine params must have shape ({n},), "
            f"got {gamma.shape} and {beta.shape}")
    rows = np.ascontiguousarray(a.data.reshape(-1, n))
    y, mu, rstd = kernels.layernorm_fwd(rows, gamma.data, beta.data, eps)

    def bwd(g):
        g2 = np.ascontiguousarray(g).reshape(-1, n)
        gx, dgamma, dbeta = kernels.layernorm_bwd(rows, mu, rstd, gamma.data, g2)
        return gx.reshape(a.shape), dgamma, dbeta

    return _push(y.reshape(a.shape), "layer_norm", (a, gamma, beta), bwd)


def conv2d(x: Tensor, w: Tensor, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d convolution, NCHW layout, square kernel."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d operands, got {x.shape} and {w.shape}")
    bsz, cin, h, wd = x.shape
    cout, cin_w, k, k2 = w.shape
    if cin != cin_w or k != k2:
        raise ShapeError(f"conv2d: weight {w.shape} incompatible with input {x.shape}")
    s, p = int(stride), int(padding)
    ho = (h + 2 * p - k) // s + 1
    wo = (wd + 2 * p - k) // s + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: empty output for input {x.shape}, k={k}, stride={s}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    out = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3]))  # B,Ho,Wo,Co
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    parents = [x, w]
    if b is not None:
        if b.shape != (cout,):
            raise ShapeError(f"conv2d: bias must have shape ({cout},), got {b.shape}")
        out = out + b.data[None, :, None, None]
        parents.append(b)

    def bwd(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # Co,Ci,k,k
        gfull = np.tensordot(g, w.data, axes=([1], [0]))  # B,Ho,Wo,Ci,k,k
        gxp = np.zeros_like(xp)
        for u in range(k):
            for v in range(k):
                gxp[:, :, u:u + ho * s:s, v:v + wo * s:s] += \
                    gfull[..., u, v].transpose(0, 3, 1, 2)
        gx = gxp[:, :, p:p + h, p:p + wd] if p else gxp
        grads = [np.ascontiguousarray(gx), gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _push(out, "conv2d", parents, bwd)


# ---------------------------------------------------------------------------
# op registry
# ---------------------------------------------------------------------------

OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "pow": power,
    "relu": relu,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "softplus": softplus,
    "clamp": clamp,
    "reshape": reshape,
    "transpose": transpose,
    "tile": broadcast_to,
    "concat": concat,
    "slice": slice_,
    "mean": mean,
    "sum": sum_,
    "matmul": matmul,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "conv2d": conv2d,
}


def forward_op(kind: str, inputs, **kwargs) -> Tensor:
    """Dispatch an op by name; inputs is the list of tensor arguments."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op {kind!r}; known: {sorted(OPS)}") from None
    if kind == "concat":
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)
