"""Minimal reverse-mode autodiff over numpy arrays.

Tensors are dense float arrays (NCHW layout for 4-D data) that record the
operations producing them. Calling ``backward()`` on a scalar walks the
recorded graph in reverse topological order and accumulates ``grad`` buffers
on every tensor that requires gradients. Multiple uses of a tensor sum their
contributions.

The op set is exactly what the demosaicing networks need: convolution,
the usual activations, batch norm, pixel shuffle, dropout and a handful of
elementwise/reduction primitives. Everything runs on the CPU; convolutions
are lowered to BLAS matmuls through im2col.
"""

import numpy as np
from scipy.special import expit

_default_dtype = np.float32
_grad_enabled = True


def set_default_dtype(dtype):
    """Set the dtype newly created tensors default to (float32 or float64).

    float32 is the training/inference default; float64 exists so gradient
    checks can run at tight tolerances.
    """
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _default_dtype = dtype.type


def get_default_dtype():
    return _default_dtype


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class GraphConsumedError(RuntimeError):
    """Raised when backward() is called twice on the same graph."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _default_dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        """A view of the same data cut off from the graph."""
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # ---- graph traversal ----

    def backward(self):
        """Populate grad on every requires_grad tensor reachable from this scalar."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss tensor")
        if self._consumed:
            raise GraphConsumedError("backward() already ran on this graph")
        topo = []
        visited = {id(self)}
        stack = [(self, 0)]
        while stack:
            node, i = stack.pop()
            if i < len(node._parents):
                stack.append((node, i + 1))
                p = node._parents[i]
                if id(p) not in visited:
                    visited.add(id(p))
                    stack.append((p, 0))
            else:
                topo.append(node)
        if self.grad is None:
            self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            fn = node._backward_fn
            if fn is not None and node.grad is not None:
                fn(node.grad)
                node._backward_fn = None
                node._parents = ()
        self._consumed = True

    # ---- operator sugar ----

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, -other)
        return add(self, -other)

    def __rsub__(self, other):
        # scalar - tensor
        return add(-self, other)


def _accumulate(t, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _node(data, parents, backward_fn):
    """Wrap op output; record graph edges only to grad-requiring parents."""
    grad_parents = tuple(p for p in parents if p.requires_grad)
    out = Tensor(data, requires_grad=bool(grad_parents), dtype=data.dtype)
    if _grad_enabled and grad_parents:
        out._parents = grad_parents
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
    return out


def _as_tensor(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


# ---- elementwise ----

def add(a, b):
    """Elementwise a + b (same shapes, or tensor + scalar)."""
    if isinstance(b, Tensor) and isinstance(a, Tensor):
        if a.data.shape != b.data.shape:
            raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, g)

        return _node(a.data + b.data, (a, b), backward)

    t = a if isinstance(a, Tensor) else b
    c = b if isinstance(a, Tensor) else a
    cval = t.data.dtype.type(c)

    def backward(g):
        _accumulate(t, g)

    return _node(t.data + cval, (t,), backward)


def mul(a, b):
    """Elementwise product; either argument may be a python scalar."""
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise ValueError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")
        ad, bd = a.data, b.data

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g * bd)
            if b.requires_grad:
                _accumulate(b, g * ad)

        return _node(ad * bd, (a, b), backward)

    t = a if isinstance(a, Tensor) else b
    c = b if isinstance(a, Tensor) else a
    cval = t.data.dtype.type(c)

    def backward(g):
        _accumulate(t, g * cval)

    return _node(t.data * cval, (t,), backward)


def log(x):
    xd = x.data

    def backward(g):
        _accumulate(x, g / xd)

    return _node(np.log(xd), (x,), backward)


def clip(x, lo, hi):
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    mask = (x.data > lo) & (x.data < hi)

    def backward(g):
        _accumulate(x, g * mask)

    return _node(np.clip(x.data, lo, hi), (x,), backward)


def mean(x, axis=None):
    """Arithmetic mean over the given axes (all, when axis is None)."""
    out = x.data.mean(axis=axis)
    if axis is None:
        n = x.data.size
        shape_back = x.data.shape

        def backward(g):
            _accumulate(x, np.broadcast_to(g / n, shape_back))

        return _node(np.asarray(out, dtype=x.data.dtype), (x,), backward)

    axes = axis if isinstance(axis, tuple) else (axis,)
    axes = tuple(ax % x.data.ndim for ax in axes)
    n = 1
    for ax in axes:
        n *= x.data.shape[ax]

    def backward(g):
        ge = np.expand_dims(g, axes)
        _accumulate(x, np.broadcast_to(ge / n, x.data.shape))

    return _node(out, (x,), backward)


def mean_square(a, b):
    """Mean over all elements of (a - b)**2, as a scalar tensor."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mean_square shape mismatch: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    n = diff.size
    out = np.asarray((diff * diff).mean(), dtype=a.data.dtype)

    def backward(g):
        scale = g * a.data.dtype.type(2.0 / n)
        if a.requires_grad:
            _accumulate(a, scale * diff)
        if b.requires_grad:
            _accumulate(b, -scale * diff)

    return _node(out, (a, b), backward)


# ---- activations ----

def relu(x):
    mask = x.data > 0

    def backward(g):
        _accumulate(x, g * mask)

    return _node(np.where(mask, x.data, x.data.dtype.type(0)), (x,), backward)


def leaky_relu(x, alpha=0.2):
    mask = x.data >= 0
    a = x.data.dtype.type(alpha)

    def backward(g):
        _accumulate(x, np.where(mask, g, g * a))

    return _node(np.where(mask, x.data, x.data * a), (x,), backward)


def sigmoid(x):
    out = expit(x.data)

    def backward(g):
        _accumulate(x, g * out * (1 - out))

    return _node(out, (x,), backward)


# ---- structural ops ----

def pixel_shuffle(x, r):
    """Rearrange (N, C*r^2, H, W) -> (N, C, r*H, r*W).

    Output pixel (n, c, r*h+dy, r*w+dx) comes from channel c*r^2 + dy*r + dx.
    """
    n, c2, h, w = x.data.shape
    if c2 % (r * r) != 0:
        raise ValueError(f"pixel_shuffle: {c2} channels not divisible by r^2={r * r}")
    c = c2 // (r * r)
    out = x.data.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)

    def backward(g):
        gi = g.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c2, h, w)
        _accumulate(x, gi)

    return _node(np.ascontiguousarray(out), (x,), backward)


def pixel_unshuffle(x, r):
    """Inverse of pixel_shuffle: (N, C, r*H, r*W) -> (N, C*r^2, H, W)."""
    n, c, hr, wr = x.data.shape
    if hr % r != 0 or wr % r != 0:
        raise ValueError("pixel_unshuffle: spatial size not divisible by r")
    h, w = hr // r, wr // r
    out = x.data.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)

    def backward(g):
        gi = g.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, hr, wr)
        _accumulate(x, gi)

    return _node(np.ascontiguousarray(out), (x,), backward)


def dropout(x, keep_prob, mode="train", rng=None):
    """Inverted dropout. keep_prob=1 and eval mode are both exact identities."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"dropout keep_prob must be in (0, 1], got {keep_prob}")
    if mode == "eval" or keep_prob == 1.0:
        def backward(g):
            _accumulate(x, g)

        return _node(x.data, (x,), backward)
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    scale = (rng.random(x.data.shape) < keep_prob).astype(x.data.dtype)
    scale /= x.data.dtype.type(keep_prob)

    def backward(g):
        _accumulate(x, g * scale)

    return _node(x.data * scale, (x,), backward)


# ---- batch norm ----

class BatchNormState:
    """Running mean/var for one batch-norm layer.

    Arrays are updated in place so other holders of the same buffers
    (e.g. a parameter store) observe the updates.
    """

    def __init__(self, channels, dtype=None):
        dt = dtype or _default_dtype
        self.mean = np.zeros(channels, dtype=dt)
        self.var = np.ones(channels, dtype=dt)
        self.batches = np.zeros(1, dtype=dt)

    @property
    def initialized(self):
        return self.batches[0] > 0


def batch_norm(x, gamma, beta, state, mode="train", eps=1e-5, momentum=0.1,
               update_running=True):
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes by batch statistics (and, unless update_running is
    False, folds them into the running stats); eval mode normalizes by the
    running stats and requires them to be initialized.
    """
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError("batch_norm: gamma/beta length must equal channel count")
    dt = x.data.dtype
    eps = dt.type(eps)

    if mode == "train":
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        if update_running:
            m = dt.type(momentum)
            state.mean *= 1 - m
            state.mean += m * mu
            state.var *= 1 - m
            state.var += m * var
            state.batches += 1
    else:
        if not state.initialized:
            raise RuntimeError("batch_norm eval mode with uninitialized running stats")
        mu = state.mean
        var = state.var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    m_count = n * h * w

    def backward(g):
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gscale = (gamma.data * inv_std)[None, :, None, None]
            if mode == "train":
                gsum = g.sum(axis=(0, 2, 3), keepdims=True)
                gx_sum = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gi = gscale * (g - gsum / m_count - xhat * (gx_sum / m_count))
            else:
                gi = gscale * g
            _accumulate(x, gi)

    return _node(out, (x, gamma, beta), backward)


# ---- convolution ----

def _im2col(xp, k, stride, ho, wo):
    # xp: zero-padded input (N, C, Hp, Wp) -> (N, C*k*k, Ho*Wo), built one
    # kernel tap at a time so every copy runs along contiguous rows
    n, c = xp.shape[:2]
    cols = np.empty((n, c * k * k, ho * wo), dtype=xp.dtype)
    view = cols.reshape(n, c, k, k, ho, wo)
    for dy in range(k):
        ys = slice(dy, dy + stride * (ho - 1) + 1, stride)
        for dx in range(k):
            xs = slice(dx, dx + stride * (wo - 1) + 1, stride)
            view[:, :, dy, dx] = xp[:, :, ys, xs]
    return cols


def conv2d(x, weight, bias, stride=1, padding=0):
    """2-D cross-correlation over NCHW input with an OIHW kernel.

    Output spatial size is floor((H + 2*padding - k)/stride) + 1 per axis.
    Differentiable with respect to input, weight and bias.
    """
    if not isinstance(stride, int) or stride < 1:
        raise ValueError(f"conv2d stride must be a positive int, got {stride}")
    if padding < 0:
        raise ValueError("conv2d padding must be non-negative")
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    n, cin, h, w = x.data.shape
    cout, cin_w, k, k2 = weight.data.shape
    if k != k2:
        raise ValueError("conv2d kernels must be square")
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: input has {cin}, weight expects {cin_w}")
    if bias is not None and bias.data.shape != (cout,):
        raise ValueError("conv2d bias must have one entry per output channel")
    if h + 2 * padding < k or w + 2 * padding < k:
        raise ValueError("conv2d kernel larger than padded input")
    if padding > k - 1:
        raise ValueError("conv2d padding beyond kernel-1 is not supported")

    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, k, stride, ho, wo)
    wm = weight.data.reshape(cout, cin * k * k)
    y = np.matmul(wm, cols)  # (N, Cout, Ho*Wo), already in output order
    if bias is not None:
        y += bias.data[:, None]
    out = y.reshape(n, cout, ho, wo)

    def backward(g):
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        gm = g.reshape(n, cout, ho * wo)
        if weight.requires_grad:
            if padding:
                xp2 = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
            else:
                xp2 = x.data
            cols2 = _im2col(xp2, k, stride, ho, wo)
            gw = np.matmul(gm, cols2.transpose(0, 2, 1)).sum(axis=0)
            _accumulate(weight, gw.reshape(weight.data.shape))
        if x.requires_grad:
            colsg = np.matmul(wm.T, gm).reshape(n, cin, k, k, ho, wo)
            # scatter columns back: one strided add per kernel tap
            gp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
            for dy in range(k):
                ys = slice(dy, dy + stride * (ho - 1) + 1, stride)
                for dx in range(k):
                    xs = slice(dx, dx + stride * (wo - 1) + 1, stride)
                    gp[:, :, ys, xs] += colsg[:, :, dy, dx]
            if padding:
                gi = np.ascontiguousarray(gp[:, :, padding:padding + h, padding:padding + w])
            else:
                gi = gp
            _accumulate(x, gi)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _node(out, parents, backward)
