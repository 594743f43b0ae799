"""Dense float64 tensors with a build-then-consume reverse-mode tape.

Every differentiable operation in the library runs through this module:
the forward pass computes a numpy result and, while gradients are enabled,
records a backward rule on the active tape.  ``backward(loss)`` replays the
tape in reverse recording order (execution order is a valid topological
order, so its reverse is too) and accumulates into ``.grad`` buffers.

A tape is consumed by its backward pass: calling ``backward`` twice without
an intervening forward raises ``ContractError``.  Recording onto a consumed
tape transparently starts a fresh one, so ordinary forward/backward loops
need no explicit tape management.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "Tape", "backward", "no_grad", "set_debug_checks",
    "matmul", "conv2d", "layer_norm", "sigmoid", "silu", "softplus",
    "relu", "exp", "log", "absolute", "clamp", "concat", "flip",
    "DimensionError", "NumericError", "ContractError", "DomainError",
    "ConfigError",
]


class DimensionError(ValueError):
    """Operand shapes violate an operation's shape contract."""


class NumericError(ArithmeticError):
    """A numeric domain was violated or a non-finite value was produced."""


class ContractError(RuntimeError):
    """An API usage contract was violated (e.g. non-scalar loss)."""


class DomainError(ValueError):
    """A scalar argument lies outside its mathematical domain."""


class ConfigError(ValueError):
    """A configuration value is inconsistent or unsupported."""


# --------------------------------------------------------------------------
# tape machinery
# --------------------------------------------------------------------------

class Tape:
    """Ordered record of differentiable ops, consumed by one backward pass."""

    def __init__(self):
        self._entries = []  # (out Tensor, backward fn taking gout ndarray)
        self.consumed = False

    def __len__(self):
        return len(self._entries)

    def record(self, out, backward_fn):
        self._entries.append((out, backward_fn))

    def backward(self, loss):
        if self.consumed:
            raise ContractError(
                "tape already consumed; run a forward pass before calling "
                "backward again")
        if loss.data.size != 1:
            raise ContractError(
                f"backward expects a scalar loss, got shape {loss.shape}")
        self.consumed = True
        loss.grad = np.ones_like(loss.data)
        for out, backward_fn in reversed(self._entries):
            if out.grad is None:  # not reachable from the loss
                continue
            backward_fn(out.grad)


_tape = Tape()
_grad_enabled = True
_debug_checks = False


def active_tape() -> Tape:
    return _tape


def reset_tape() -> Tape:
    """Install and return a fresh tape, releasing the previous graph."""
    global _tape
    _tape = Tape()
    return _tape


def backward(loss: "Tensor") -> None:
    """Replay the active tape in reverse, populating ``.grad`` buffers."""
    _tape.backward(loss)


class no_grad:
    """Context manager that disables tape recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def set_debug_checks(enabled: bool) -> None:
    """Validate finiteness after every op, naming the offender on failure."""
    global _debug_checks
    _debug_checks = bool(enabled)


# --------------------------------------------------------------------------
# tensor
# --------------------------------------------------------------------------

class Tensor:
    """A float64 numpy array plus an optional gradient buffer.

    Tensors are immutable once constructed, except for gradient
    accumulation into ``.grad`` and explicit rebinds of parameter data by
    an optimizer between tape lifetimes.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    # -- bookkeeping ------------------------------------------------------

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
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("tensor/tensor division is not provided; "
                                "multiply by a reciprocal instead")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def backward(self):
        backward(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _finish(name: str, out_data, inputs, backward_builder):
    """Debug-check the forward result and record the backward rule."""
    if _debug_checks and not np.all(np.isfinite(out_data)):
        raise NumericError(f"op '{name}' produced non-finite values")
    req = _grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=req)
    if req:
        global _tape
        if _tape.consumed:
            _tape = Tape()
        _tape.record(out, backward_builder(out))
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# --------------------------------------------------------------------------
# elementwise ops
# --------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def build(out):
        def bw(g):
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(g, b.data.shape))
        return bw

    return _finish("add", out_data, (a, b), build)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def build(out):
        def bw(g):
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))
        return bw

    return _finish("mul", out_data, (a, b), build)


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = _wrap(x)
    s = _sigmoid_np(x.data)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(g * s * (1.0 - s))
        return bw

    return _finish("sigmoid", s, (x,), build)


def silu(x: Tensor) -> Tensor:
    x = _wrap(x)
    s = _sigmoid_np(x.data)
    out_data = x.data * s

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(g * s * (1.0 + x.data * (1.0 - s)))
        return bw

    return _finish("silu", out_data, (x,), build)


def softplus(x: Tensor) -> Tensor:
    x = _wrap(x)
    out_data = np.logaddexp(0.0, x.data)  # overflow-safe log(1 + e^x)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(g * _sigmoid_np(x.data))
        return bw

    return _finish("softplus", out_data, (x,), build)


def relu(x: Tensor) -> Tensor:
    x = _wrap(x)
    out_data = np.maximum(x.data, 0.0)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(g * (x.data > 0.0))
        return bw

    return _finish("relu", out_data, (x,), build)


def exp(x: Tensor) -> Tensor:
    x = _wrap(x)
    out_data = np.exp(x.data)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(g * out_data)
        return bw

    return _finish("exp", out_data, (x,), build)


def log(x: Tensor) -> Tensor:
    x = _wrap(x)
    if np.any(x.data <= 0.0):
        raise NumericError("log requires strictly positive inputs")
    out_data = np.log(x.data)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(g / x.data)
        return bw

    return _finish("log", out_data, (x,), build)


def absolute(x: Tensor) -> Tensor:
    """|x| with subgradient 0 at ties."""
    x = _wrap(x)
    out_data = np.abs(x.data)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(g * np.sign(x.data))
        return bw

    return _finish("abs", out_data, (x,), build)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes through the interior only."""
    if not lo < hi:
        raise DomainError(f"clamp requires lo < hi, got [{lo}, {hi}]")
    x = _wrap(x)
    out_data = np.clip(x.data, lo, hi)

    def build(out):
        def bw(g):
            if x.requires_grad:
                inside = (x.data > lo) & (x.data < hi)
                x.accumulate_grad(g * inside)
        return bw

    return _finish("clamp", out_data, (x,), build)


def sum_(x: Tensor, axis=None) -> Tensor:
    x = _wrap(x)
    out_data = np.sum(x.data, axis=axis)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(_spread(g, x.data.shape, axis))
        return bw

    return _finish("sum", out_data, (x,), build)


def mean(x: Tensor, axis=None) -> Tensor:
    x = _wrap(x)
    out_data = np.mean(x.data, axis=axis)
    count = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in _axis_tuple(axis, x.data.ndim)])

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(_spread(g, x.data.shape, axis) / count)
        return bw

    return _finish("mean", out_data, (x,), build)


def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def _spread(g, shape, axis):
    """Broadcast a reduced gradient back up to ``shape``."""
    axes = _axis_tuple(axis, len(shape))
    keep = list(shape)
    for a in axes:
        keep[a] = 1
    return np.broadcast_to(np.reshape(g, keep), shape).copy()


# --------------------------------------------------------------------------
# shape ops
# --------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    x = _wrap(x)
    out_data = np.reshape(x.data, shape)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(np.reshape(g, x.data.shape))
        return bw

    return _finish("reshape", out_data, (x,), build)


def transpose(x: Tensor, axes=None) -> Tensor:
    x = _wrap(x)
    out_data = np.transpose(x.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(np.transpose(g, inv))
        return bw

    return _finish("transpose", out_data, (x,), build)


def flip(x: Tensor, axis: int) -> Tensor:
    x = _wrap(x)
    out_data = np.flip(x.data, axis)

    def build(out):
        def bw(g):
            if x.requires_grad:
                x.accumulate_grad(np.flip(g, axis))
        return bw

    return _finish("flip", out_data, (x,), build)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of an empty sequence")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def build(out):
        def bw(g):
            parts = np.split(g, splits, axis=axis)
            for t, p in zip(tensors, parts):
                if t.requires_grad:
                    t.accumulate_grad(p)
        return bw

    return _finish("concat", out_data, tuple(tensors), build)


def getitem(x: Tensor, key) -> Tensor:
    """Basic (int/slice) indexing with a zero-scatter backward."""
    x = _wrap(x)
    out_data = x.data[key]

    def build(out):
        def bw(g):
            if x.requires_grad:
                buf = np.zeros_like(x.data)
                buf[key] = g
                x.accumulate_grad(buf)
        return bw

    return _finish("getitem", out_data, (x,), build)


# --------------------------------------------------------------------------
# matmul / layer norm / conv2d
# --------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def build(out):
        def bw(g):
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)
        return bw

    return _finish("matmul", out_data, (a, b), build)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis: (x - mean)/sqrt(var + eps) * gamma + beta.

    Variance is the population variance of the last axis.
    """
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    c = x.data.shape[-1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(
            f"layer_norm affine parameters must have shape ({c},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gamma.data + beta.data

    def build(out):
        def bw(g):
            if beta.requires_grad:
                beta.accumulate_grad(g.reshape(-1, c).sum(axis=0))
            if gamma.requires_grad:
                gamma.accumulate_grad((g * xhat).reshape(-1, c).sum(axis=0))
            if x.requires_grad:
                gy = g * gamma.data
                m1 = gy.mean(axis=-1, keepdims=True)
                m2 = (gy * xhat).mean(axis=-1, keepdims=True)
                x.accumulate_grad((gy - m1 - xhat * m2) * inv)
        return bw

    return _finish("layer_norm", out_data, (x, gamma, beta), build)


def _conv_out_extent(size, k, stride, padding, dilation):
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _im2col(xp, kh, kw, stride, dilation, ho, wo):
    """Gather sliding windows: [N,C,Hp,Wp] -> [N, C, kh*kw, ho*wo]."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh * kw, ho * wo), dtype=xp.dtype)
    for t, (di, dj) in enumerate((i, j) for i in range(kh) for j in range(kw)):
        patch = xp[:, :,
                   di * dilation: di * dilation + stride * ho: stride,
                   dj * dilation: dj * dilation + stride * wo: stride]
        cols[:, :, t, :] = patch.reshape(n, c, -1)
    return cols


def _col2im(dcols, xp_shape, kh, kw, stride, dilation, ho, wo):
    """Scatter-add window gradients back: inverse of ``_im2col``."""
    n, c = xp_shape[:2]
    dxp = np.zeros(xp_shape, dtype=dcols.dtype)
    for t, (di, dj) in enumerate((i, j) for i in range(kh) for j in range(kw)):
        dxp[:, :,
            di * dilation: di * dilation + stride * ho: stride,
            dj * dilation: dj * dilation + stride * wo: stride] += \
            dcols[:, :, t, :].reshape(n, c, ho, wo)
    return dxp


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, *,
           stride: int = 1, padding: int = 0, dilation: int = 1,
           groups: int = 1) -> Tensor:
    """Cross-correlation of [N,C,H,W] with [F,C/groups,kh,kw] filters.

    Zero padding, odd kernel extents, no output flipping.  The output
    spatial extent is (H + 2*padding - dilation*(kh-1) - 1)//stride + 1.
    """
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError(
            f"conv2d expects x[N,C,H,W] and w[F,Cg,kh,kw], got "
            f"{x.shape} and {w.shape}")
    n, c, h, wdt = x.data.shape
    f, cg, kh, kw = w.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or dilation < 1 or padding < 0:
        raise DimensionError("stride/dilation must be >= 1 and padding >= 0")
    if c % groups or f % groups or cg != c // groups:
        raise DimensionError(
            f"channel counts {c}->{f} incompatible with groups={groups}")
    ho = _conv_out_extent(h, kh, stride, padding, dilation)
    wo = _conv_out_extent(wdt, kw, stride, padding, dilation)
    if ho <= 0 or wo <= 0:
        raise DimensionError(
            f"conv2d output extent would be {ho}x{wo} for input {h}x{wdt}")
    if bias is not None:
        bias = _wrap(bias)
        if bias.data.shape != (f,):
            raise DimensionError(f"bias must have shape ({f},)")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding),
                         (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, dilation, ho, wo)  # [N,C,K,L]
    fg = f // groups
    out_data = np.empty((n, f, ho * wo), dtype=np.float64)
    wmat = w.data.reshape(groups, fg, cg * kh * kw)
    colsg = cols.reshape(n, groups, cg * kh * kw, ho * wo)
    for gi in range(groups):
        out_data[:, gi * fg:(gi + 1) * fg] = wmat[gi] @ colsg[:, gi]
    out_data = out_data.reshape(n, f, ho, wo)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]

    inputs = (x, w) if bias is None else (x, w, bias)

    def build(out):
        def bw(g):
            gmat = g.reshape(n, f, ho * wo)
            if bias is not None and bias.requires_grad:
                bias.accumulate_grad(gmat.sum(axis=(0, 2)))
            gg = gmat.reshape(n, groups, fg, ho * wo)
            if w.requires_grad:
                dw = np.einsum("ngfl,ngkl->gfk", gg, colsg)
                w.accumulate_grad(dw.reshape(w.data.shape))
            if x.requires_grad:
                dcols = np.einsum("gfk,ngfl->ngkl", wmat, gg)
                dcols = dcols.reshape(n, c, kh * kw, ho * wo)
                dxp = _col2im(dcols, xp.shape, kh, kw, stride, dilation,
                              ho, wo)
                if padding:
                    dxp = dxp[:, :, padding:padding + h, padding:padding + wdt]
                x.accumulate_grad(dxp)
        return bw

    return _finish("conv2d", out_data, inputs, build)
