"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine is a Wengert list: every differentiable operation executed
while a :class:`Tape` is active appends one node (output tensor plus a
backward closure). ``Tape.backward`` seeds the loss gradient and replays
the list in reverse append order, which is a valid topological order
because operations append in execution order. Outputs never used by the
loss keep a ``None`` gradient buffer, equivalent to zero.

Layout conventions: image tensors are NCHW row-major, matmul operands are
2-D, and everything is float64. No broadcasting beyond the few patterns
the network blocks need (channel bias, row bias, channel scaling).
"""

from __future__ import annotations

import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, DimensionError

_ACTIVE = threading.local()


def _active_tape():
    stack = getattr(_ACTIVE, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """N-dimensional float64 value with an optional gradient buffer.

    Treat ``data`` as frozen once the tensor participates in a graph; the
    only sanctioned mutations are gradient accumulation during a tape's
    backward pass and optimizer updates between tapes.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def grad_array(self) -> np.ndarray:
        """Gradient buffer, materializing zeros when nothing flowed back."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Append-only record of one forward pass, replayed in reverse.

    Use as a context manager; tapes nest, and the innermost active tape
    records. Distinct tapes over disjoint tensors are independent, so
    separate threads may each run their own.
    """

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        stack = getattr(_ACTIVE, "stack", None)
        if stack is None:
            stack = _ACTIVE.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.stack.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss: Tensor, seed: np.ndarray | None = None):
        """Accumulate d(loss)/d(x) into ``x.grad`` for every recorded input.

        ``loss`` is normally a scalar; a custom ``seed`` array of matching
        shape is accepted for vector-Jacobian products.
        """
        if seed is None:
            if loss.size != 1:
                raise DimensionError(
                    f"backward needs a scalar loss or an explicit seed; got shape {loss.shape}"
                )
            seed = np.ones_like(loss.data)
        elif seed.shape != loss.data.shape:
            raise DimensionError("seed shape must match the loss shape")
        _accumulate(loss, np.asarray(seed, dtype=np.float64))
        for out, backward_fn in reversed(self._nodes):
            if out.grad is None:
                continue
            backward_fn(out.grad)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def _track(out: Tensor, inputs, backward_fn):
    tape = _active_tape()
    if tape is None:
        return out
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._nodes.append((out, backward_fn))
    return out


def _require_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g)

    return _track(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _track(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * c)

    return _track(out, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (a.data > 0.0))

    return _track(out, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * out.data)

    return _track(out, (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient is zero outside the open interval."""
    out = Tensor(np.clip(a.data, lo, hi))

    def backward(g):
        if a.requires_grad:
            inside = (a.data > lo) & (a.data < hi)
            _accumulate(a, g * inside)

    return _track(out, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.data.shape))

    return _track(out, (a,), backward)


def concat_channels(tensors) -> Tensor:
    """Concatenate NCHW tensors along the channel axis."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat_channels: empty operand list")
    first = tensors[0].data.shape
    if len(first) != 4:
        raise DimensionError("concat_channels: operands must be NCHW")
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != 4 or s[0] != first[0] or s[2:] != first[2:]:
            raise DimensionError(
                f"concat_channels: extents {s} differ from {first} outside the channel axis"
            )
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1))
    splits = np.cumsum([t.data.shape[1] for t in tensors])[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=1)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                _accumulate(t, piece)

    return _track(out, tensors, backward)


def _normalize_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(ax % ndim for ax in axes)


def reduce_sum(a: Tensor, axes=None) -> Tensor:
    axes = _normalize_axes(axes, a.data.ndim)
    out = Tensor(a.data.sum(axis=axes))

    def backward(g):
        if a.requires_grad:
            ge = g
            for ax in sorted(axes):
                ge = np.expand_dims(ge, ax)
            _accumulate(a, np.broadcast_to(ge, a.data.shape).copy())

    return _track(out, (a,), backward)


def mean(a: Tensor, axes=None) -> Tensor:
    axes = _normalize_axes(axes, a.data.ndim)
    count = int(np.prod([a.data.shape[ax] for ax in axes])) if axes else 1
    if count == 0:
        raise DimensionError("mean over zero elements")
    out = Tensor(a.data.mean(axis=axes))

    def backward(g):
        if a.requires_grad:
            ge = g
            for ax in sorted(axes):
                ge = np.expand_dims(ge, ax)
            _accumulate(a, np.broadcast_to(ge, a.data.shape) / count)

    return _track(out, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul: operands must be 2-D")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: inner extents differ ({a.data.shape} vs {b.data.shape})"
        )
    out = Tensor(a.data @ b.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _track(out, (a, b), backward)


def add_row_bias(x: Tensor, bias: Tensor) -> Tensor:
    """x (M, N) plus a length-N bias added to every row."""
    if x.data.ndim != 2 or bias.data.ndim != 1 or x.data.shape[1] != bias.data.shape[0]:
        raise DimensionError(
            f"add_row_bias: got {x.data.shape} and {bias.data.shape}"
        )
    out = Tensor(x.data + bias.data[None, :])

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=0))

    return _track(out, (x, bias), backward)


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """x (N, C, H, W) plus a length-C per-channel bias."""
    if x.data.ndim != 4 or bias.data.ndim != 1 or x.data.shape[1] != bias.data.shape[0]:
        raise DimensionError(
            f"add_channel_bias: got {x.data.shape} and {bias.data.shape}"
        )
    out = Tensor(x.data + bias.data[None, :, None, None])

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))

    return _track(out, (x, bias), backward)


def mul_channelwise(x: Tensor, v: Tensor) -> Tensor:
    """x (N, C, H, W) scaled per channel by a length-C vector."""
    if x.data.ndim != 4 or v.data.ndim != 1 or x.data.shape[1] != v.data.shape[0]:
        raise DimensionError(f"mul_channelwise: got {x.data.shape} and {v.data.shape}")
    out = Tensor(x.data * v.data[None, :, None, None])

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * v.data[None, :, None, None])
        if v.requires_grad:
            _accumulate(v, (g * x.data).sum(axis=(0, 2, 3)))

    return _track(out, (x, v), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = Tensor(e / e.sum(axis=axis, keepdims=True))

    def backward(g):
        if a.requires_grad:
            y = out.data
            _accumulate(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _track(out, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(shifted - lse)

    def backward(g):
        if a.requires_grad:
            soft = np.exp(out.data)
            _accumulate(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _track(out, (a,), backward)


# ---------------------------------------------------------------------------
# convolution and pooling


def _pair(v, name):
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise ConfigError(f"{name} must be an int or a pair")
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d(x: Tensor, kernel: Tensor, stride=1, padding=0) -> Tensor:
    """2-D cross-correlation of an NCHW input with an OIKK kernel.

    Output spatial extent per axis is floor((H + 2p - K) / s) + 1.
    Differentiable with respect to both the input and the kernel.
    """
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    if sh < 1 or sw < 1:
        raise ConfigError(f"conv2d: stride must be >= 1, got {(sh, sw)}")
    if ph < 0 or pw < 0:
        raise ConfigError(f"conv2d: padding must be >= 0, got {(ph, pw)}")
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d: input must be NCHW, got shape {x.data.shape}")
    if kernel.data.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be OIKK, got shape {kernel.data.shape}")
    n, c, h, w = x.data.shape
    o, ci, kh, kw = kernel.data.shape
    if ci != c:
        raise DimensionError(
            f"conv2d: input has {c} channels but kernel expects {ci}"
        )
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} does not fit input {h}x{w} with padding {(ph, pw)}"
        )

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = Tensor(np.einsum("nchwij,ocij->nohw", windows, kernel.data, optimize=True))

    def backward(g):
        if kernel.requires_grad:
            _accumulate(
                kernel,
                np.einsum("nohw,nchwij->ocij", g, windows, optimize=True),
            )
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += np.einsum(
                        "nohw,oc->nchw", g, kernel.data[:, :, i, j], optimize=True
                    )
            if ph or pw:
                gxp = gxp[:, :, ph : ph + h, pw : pw + w]
            _accumulate(x, gxp)

    return _track(out, (x, kernel), backward)


def avg_pool2d(x: Tensor, kernel=2, stride=None, padding=0) -> Tensor:
    """Average pooling over NCHW input; padded positions count as zeros."""
    kh, kw = _pair(kernel, "kernel")
    sh, sw = _pair(stride if stride is not None else kernel, "stride")
    ph, pw = _pair(padding, "padding")
    if x.data.ndim != 4:
        raise DimensionError(f"avg_pool2d: input must be NCHW, got {x.data.shape}")
    n, c, h, w = x.data.shape
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise DimensionError(f"avg_pool2d: window {kh}x{kw} does not fit {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = Tensor(windows.mean(axis=(4, 5)))
    inv = 1.0 / (kh * kw)

    def backward(g):
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            spread = g * inv
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += spread
            if ph or pw:
                gxp = gxp[:, :, ph : ph + h, pw : pw + w]
            _accumulate(x, gxp)

    return _track(out, (x,), backward)


# ---------------------------------------------------------------------------
# normalization and regularization


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over the batch and spatial axes.

    Train mode normalizes with the batch statistics (biased variance,
    epsilon-stabilized) and folds them into the running buffers in place;
    eval mode uses the running buffers. A zero-variance channel falls back
    to the epsilon path rather than dividing by zero.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"batch_norm: input must be NCHW, got {x.data.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(
            f"batch_norm: gamma/beta must have extent {c}, got "
            f"{gamma.data.shape} and {beta.data.shape}"
        )
    if not 0.0 <= momentum <= 1.0:
        raise ConfigError(f"batch_norm: momentum must be a fraction, got {momentum}")
    axes = (0, 2, 3)

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = Tensor(xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None])

    def backward(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=axes))
        if x.requires_grad:
            gxhat = g * gamma.data[None, :, None, None]
            if training:
                mean_g = gxhat.mean(axis=axes)[None, :, None, None]
                mean_gx = (gxhat * xhat).mean(axis=axes)[None, :, None, None]
                gx = inv_std[None, :, None, None] * (gxhat - mean_g - xhat * mean_gx)
            else:
                gx = gxhat * inv_std[None, :, None, None]
            _accumulate(x, gx)

    return _track(out, (x, gamma, beta), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: train mode zeroes with probability ``rate`` and
    scales survivors by 1/(1-rate); eval mode is the exact identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        out = Tensor(x.data.copy())

        def backward_id(g):
            if x.requires_grad:
                _accumulate(x, g)

        return _track(out, (x,), backward_id)

    keep = rng.random(x.data.shape) >= rate
    scale_factor = 1.0 / (1.0 - rate)
    out = Tensor(x.data * keep * scale_factor)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g * keep * scale_factor)

    return _track(out, (x,), backward)
