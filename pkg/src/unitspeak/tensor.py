"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Design notes:
  * Define-by-run: every differentiable op appends a node to a module-level
    tape; ``backward`` walks the tape in reverse and clears it.
  * No implicit broadcasting between tensors. Elementwise ops demand exact
    shape equality; the only sanctioned broadcast is trailing-dimension bias
    addition (``add_bias``) plus the explicit ``expand_to`` op. Plain numpy
    arrays/scalars may be mixed in as constants, pre-broadcast to the tensor's
    shape, since no gradient flows into them.
  * The tape is confined to a single thread. Tensors that do not require
    grad are treated as immutable constants and may be shared freely.
"""

import numpy as np

from .errors import IndexOutOfVocab, NotScalar, ShapeMismatch

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "clear_tape",
    "add_bias",
    "concat",
    "conv1d",
    "depthwise_conv1d",
    "cross_entropy",
    "expand_to",
    "gather_rows",
    "layer_norm",
    "sigmoid",
    "softmax",
    "swish",
]

_tape = []
_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording (forward-only passes)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def clear_tape():
    _tape.clear()


def _record(out, fn):
    _tape.append((out, fn))


class Tensor:
    """n-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    # ------------------------------------------------------------------ util
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def _acc(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def _out(self, data):
        return Tensor(data, requires_grad=self.requires_grad and _grad_enabled)

    # ------------------------------------------------------------ arithmetic
    def __add__(self, other):
        if not isinstance(other, Tensor):
            return self.add_const(other)
        if self.shape != other.shape:
            raise ShapeMismatch(f"add: {self.shape} vs {other.shape}")
        out = Tensor(self.data + other.data,
                     requires_grad=_grad_enabled and (self.requires_grad or other.requires_grad))
        if out.requires_grad:
            a, b = self, other

            def bwd():
                if a.requires_grad:
                    a._acc(out.grad)
                if b.requires_grad:
                    b._acc(out.grad)
            _record(out, bwd)
        return out

    def __sub__(self, other):
        if not isinstance(other, Tensor):
            return self.add_const(-np.asarray(other))
        return self + (-other)

    def __neg__(self):
        out = self._out(-self.data)
        if out.requires_grad:
            a = self

            def bwd():
                a._acc(-out.grad)
            _record(out, bwd)
        return out

    def __mul__(self, other):
        if not isinstance(other, Tensor):
            return self.mul_const(other)
        if self.shape != other.shape:
            raise ShapeMismatch(f"mul: {self.shape} vs {other.shape}")
        out = Tensor(self.data * other.data,
                     requires_grad=_grad_enabled and (self.requires_grad or other.requires_grad))
        if out.requires_grad:
            a, b = self, other

            def bwd():
                if a.requires_grad:
                    a._acc(out.grad * b.data)
                if b.requires_grad:
                    b._acc(out.grad * a.data)
            _record(out, bwd)
        return out

    __radd__ = __add__
    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, Tensor):
            raise ShapeMismatch("tensor/tensor division is not an op; use pow_const")
        return self.mul_const(1.0 / c)

    def add_const(self, c):
        """Add a constant (scalar or ndarray broadcastable to this shape)."""
        c = np.broadcast_to(np.asarray(c, dtype=np.float64), self.shape)
        out = self._out(self.data + c)
        if out.requires_grad:
            a = self

            def bwd():
                a._acc(out.grad)
            _record(out, bwd)
        return out

    def mul_const(self, c):
        c = np.broadcast_to(np.asarray(c, dtype=np.float64), self.shape)
        out = self._out(self.data * c)
        if out.requires_grad:
            a = self

            def bwd():
                a._acc(out.grad * c)
            _record(out, bwd)
        return out

    def pow_const(self, p):
        """Elementwise power with constant exponent. Caller guards the domain."""
        p = float(p)
        out = self._out(self.data ** p)
        if out.requires_grad:
            a = self

            def bwd():
                a._acc(out.grad * p * a.data ** (p - 1.0))
            _record(out, bwd)
        return out

    # ------------------------------------------------------------ structural
    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2 or a.ndim != b.ndim:
            raise ShapeMismatch(f"matmul rank: {a.shape} @ {b.shape}")
        if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
            raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
        out = Tensor(np.matmul(a.data, b.data),
                     requires_grad=_grad_enabled and (a.requires_grad or b.requires_grad))
        if out.requires_grad:
            def bwd():
                g = out.grad
                if a.requires_grad:
                    a._acc(np.matmul(g, b.data.swapaxes(-1, -2)))
                if b.requires_grad:
                    b._acc(np.matmul(a.data.swapaxes(-1, -2), g))
            _record(out, bwd)
        return out

    def transpose(self, axes):
        axes = tuple(axes)
        out = self._out(np.transpose(self.data, axes))
        if out.requires_grad:
            a = self
            inv = tuple(np.argsort(axes))

            def bwd():
                a._acc(np.transpose(out.grad, inv))
            _record(out, bwd)
        return out

    def reshape(self, shape):
        shape = tuple(shape)
        out = self._out(self.data.reshape(shape))
        if out.requires_grad:
            a = self

            def bwd():
                a._acc(out.grad.reshape(a.shape))
            _record(out, bwd)
        return out

    def slice_axis(self, axis, start, stop):
        sl = [slice(None)] * self.ndim
        sl[axis] = slice(start, stop)
        sl = tuple(sl)
        out = self._out(self.data[sl])
        if out.requires_grad:
            a = self

            def bwd():
                g = np.zeros_like(a.data)
                g[sl] = out.grad
                a._acc(g)
            _record(out, bwd)
        return out

    # ------------------------------------------------------------ reductions
    def sum(self, axis=None, keepdims=False):
        out = self._out(self.data.sum(axis=axis, keepdims=keepdims))
        if out.requires_grad:
            a = self

            def bwd():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                a._acc(np.broadcast_to(g, a.shape).copy())
            _record(out, bwd)
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))


# -------------------------------------------------------------------- ops


def add_bias(x, b):
    """x[..., d] + b[d] — the one sanctioned broadcast (trailing bias)."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"add_bias: {x.shape} + {b.shape}")
    out = Tensor(x.data + b.data,
                 requires_grad=_grad_enabled and (x.requires_grad or b.requires_grad))
    if out.requires_grad:
        def bwd():
            if x.requires_grad:
                x._acc(out.grad)
            if b.requires_grad:
                b._acc(out.grad.reshape(-1, b.shape[0]).sum(axis=0))
        _record(out, bwd)
    return out


def expand_to(x, shape):
    """Explicitly tile ``x`` to ``shape`` (prepend axes / expand size-1 dims)."""
    shape = tuple(shape)
    if len(shape) < x.ndim:
        raise ShapeMismatch(f"expand_to: {x.shape} -> {shape}")
    pad = len(shape) - x.ndim
    src = (1,) * pad + x.shape
    for s, t in zip(src, shape):
        if s != t and s != 1:
            raise ShapeMismatch(f"expand_to: {x.shape} -> {shape}")
    out = Tensor(np.broadcast_to(x.data.reshape(src), shape).copy(),
                 requires_grad=_grad_enabled and x.requires_grad)
    if out.requires_grad:
        axes = tuple(i for i, (s, t) in enumerate(zip(src, shape)) if s == 1 and t != 1)

        def bwd():
            g = out.grad
            if axes:
                g = g.sum(axis=axes, keepdims=True)
            x._acc(g.reshape(x.shape))
        _record(out, bwd)
    return out


def concat(tensors, axis=0):
    datas = [t.data for t in tensors]
    req = _grad_enabled and any(t.requires_grad for t in tensors)
    out = Tensor(np.concatenate(datas, axis=axis), requires_grad=req)
    if req:
        sizes = [t.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def bwd():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * out.ndim
                    sl[axis] = slice(lo, hi)
                    t._acc(out.grad[tuple(sl)])
        _record(out, bwd)
    return out


def gather_rows(table, idx):
    """table[N, ...] indexed by an integer array -> [idx.shape, ...]."""
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexOutOfVocab(f"index out of range [0, {table.shape[0]})")
    out = Tensor(table.data[idx], requires_grad=_grad_enabled and table.requires_grad)
    if out.requires_grad:
        def bwd():
            g = np.zeros_like(table.data)
            np.add.at(g, idx, out.grad)
            table._acc(g)
        _record(out, bwd)
    return out


def sigmoid(x):
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = x._out(s)
    if out.requires_grad:
        def bwd():
            x._acc(out.grad * s * (1.0 - s))
        _record(out, bwd)
    return out


def swish(x):
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = x._out(d * s)
    if out.requires_grad:
        def bwd():
            x._acc(out.grad * (s + d * s * (1.0 - s)))
        _record(out, bwd)
    return out


def softmax(x, axis=-1):
    """Numerically stabilized softmax; slices along ``axis`` sum to one."""
    d = x.data
    z = d - d.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = x._out(s)
    if out.requires_grad:
        def bwd():
            g = out.grad
            x._acc(s * (g - (g * s).sum(axis=axis, keepdims=True)))
        _record(out, bwd)
    return out


def layer_norm(x, gamma, beta, eps=1e-5):
    """Per-vector normalization over the last axis, then affine."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(f"layer_norm affine {gamma.shape}/{beta.shape} vs d={d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data,
                 requires_grad=_grad_enabled and (x.requires_grad or gamma.requires_grad
                                                  or beta.requires_grad))
    if out.requires_grad:
        def bwd():
            g = out.grad
            if gamma.requires_grad:
                gamma._acc((g * xhat).reshape(-1, d).sum(axis=0))
            if beta.requires_grad:
                beta._acc(g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                gx = g * gamma.data
                x._acc(inv * (gx - gx.mean(axis=-1, keepdims=True)
                              - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))
        _record(out, bwd)
    return out


def _window_index(t_out, width, stride):
    return np.arange(t_out)[:, None] * stride + np.arange(width)[None, :]


def _pad_time(d, left, right):
    pad = [(0, 0)] * d.ndim
    pad[-2] = (left, right)
    return np.pad(d, pad)


def conv1d(x, kernel, bias=None, stride=1, padding=0):
    """1-d cross-correlation over time.

    x: [T, C_in] or [B, T, C_in]; kernel: [w, C_in, C_out].
    Output length T' = floor((T + 2*padding - w) / stride) + 1.
    """
    from .errors import EmptyOutput
    w, cin, cout = kernel.shape
    if x.shape[-1] != cin:
        raise ShapeMismatch(f"conv1d channels: {x.shape[-1]} vs {cin}")
    if w < 1 or stride < 1:
        raise ShapeMismatch("conv1d: kernel width and stride must be >= 1")
    t = x.shape[-2]
    t_out = (t + 2 * padding - w) // stride + 1
    if t_out < 1:
        raise EmptyOutput(f"conv1d: no output frames (T={t}, w={w}, stride={stride})")
    xp = _pad_time(x.data, padding, padding)
    idx = _window_index(t_out, w, stride)
    cols = xp[..., idx, :].reshape(x.shape[:-2] + (t_out, w * cin))
    k2 = kernel.data.reshape(w * cin, cout)
    y = cols @ k2
    if bias is not None:
        y = y + bias.data
    req = _grad_enabled and (x.requires_grad or kernel.requires_grad
                             or (bias is not None and bias.requires_grad))
    out = Tensor(y, requires_grad=req)
    if req:
        def bwd():
            g = out.grad
            if bias is not None and bias.requires_grad:
                bias._acc(g.reshape(-1, cout).sum(axis=0))
            if kernel.requires_grad:
                gk = cols.reshape(-1, w * cin).T @ g.reshape(-1, cout)
                kernel._acc(gk.reshape(w, cin, cout))
            if x.requires_grad:
                gcols = (g @ k2.T).reshape(x.shape[:-2] + (t_out, w, cin))
                gxp = np.zeros_like(xp)
                if gxp.ndim == 2:
                    np.add.at(gxp, idx, gcols)
                else:
                    np.add.at(gxp, (slice(None), idx), gcols)
                x._acc(gxp[..., padding:padding + t, :] if padding else gxp)
        _record(out, bwd)
    return out


def depthwise_conv1d(x, kernel):
    """Per-channel 'same' convolution over time; kernel [w, C], stride 1."""
    w, c = kernel.shape
    if x.shape[-1] != c:
        raise ShapeMismatch(f"depthwise_conv1d channels: {x.shape[-1]} vs {c}")
    t = x.shape[-2]
    left, right = (w - 1) // 2, w // 2
    xp = _pad_time(x.data, left, right)
    idx = _window_index(t, w, 1)
    wins = xp[..., idx, :]                       # [..., T, w, C]
    y = np.einsum("...twc,wc->...tc", wins, kernel.data)
    req = _grad_enabled and (x.requires_grad or kernel.requires_grad)
    out = Tensor(y, requires_grad=req)
    if req:
        def bwd():
            g = out.grad
            if kernel.requires_grad:
                kernel._acc(np.einsum("...twc,...tc->wc", wins, g))
            if x.requires_grad:
                vals = np.einsum("...tc,wc->...twc", g, kernel.data)
                gxp = np.zeros_like(xp)
                if gxp.ndim == 2:
                    np.add.at(gxp, idx, vals)
                else:
                    np.add.at(gxp, (slice(None), idx), vals)
                x._acc(gxp[..., left:left + t, :])
        _record(out, bwd)
    return out


def cross_entropy(logits, targets, label_smoothing=0.0, weights=None):
    """Label-smoothed negative log-likelihood, averaged over (weighted) rows.

    logits: [N, V]; targets: int array [N]. With smoothing strength e the
    per-row loss is (1-e) * NLL(target) + e * mean_v NLL(v); weights (0/1 or
    fractional) rescale the average, excluding padded rows.
    """
    eps = float(label_smoothing)
    if not 0.0 <= eps < 1.0:
        raise ShapeMismatch(f"label_smoothing must be in [0, 1): {eps}")
    n, v = logits.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise ShapeMismatch(f"targets shape {targets.shape} vs N={n}")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise IndexOutOfVocab(f"target outside [0, {v})")
    d = logits.data
    m = d.max(axis=1, keepdims=True)
    z = np.exp(d - m)
    log_z = m[:, 0] + np.log(z.sum(axis=1))
    nll_t = log_z - d[np.arange(n), targets]
    nll_mean = log_z - d.mean(axis=1)
    per_row = (1.0 - eps) * nll_t + eps * nll_mean
    if weights is None:
        wts = np.ones(n)
    else:
        wts = np.asarray(weights, dtype=np.float64)
    total = wts.sum()
    if total <= 0:
        raise ShapeMismatch("cross_entropy: no rows with positive weight")
    loss = float((per_row * wts).sum() / total)
    out = Tensor(loss, requires_grad=_grad_enabled and logits.requires_grad)
    if out.requires_grad:
        def bwd():
            soft = z / z.sum(axis=1, keepdims=True)
            ref = np.full((n, v), eps / v)
            ref[np.arange(n), targets] += 1.0 - eps
            logits._acc(out.grad * (soft - ref) * (wts / total)[:, None])
        _record(out, bwd)
    return out


def backward(loss):
    """Reverse pass: populate ``grad`` on every reachable requires_grad tensor.

    Gradients accumulate additively; the tape is cleared afterwards. Leaves
    not connected to the loss keep a zero/absent grad (not an error).
    """
    if loss.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    loss._acc(np.ones_like(loss.data))
    for out, fn in reversed(_tape):
        if out.grad is not None:
            fn()
    clear_tape()
