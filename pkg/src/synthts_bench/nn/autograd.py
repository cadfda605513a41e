"""A small reverse-mode autodiff engine over numpy arrays.

Every op builds a :class:`Tensor` whose ``_backward`` closure pushes the
output gradient into its parents. :meth:`Tensor.backward` walks the graph
in reverse topological order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    @property
    def wants_grad(self) -> bool:
        return self.requires_grad or self._backward is not None

    def _accum(self, g):
        if not self.wants_grad:
            return
        # accumulated arrays are never modified in place, so aliasing g is safe
        self.grad = g if self.grad is None else self.grad + g

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        if grad is None:
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if not node.requires_grad:
                    node.grad = None  # free intermediates

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _needs_grad(*ts):
    return any(t.wants_grad for t in ts)


def _make(data, parents, backward):
    if _needs_grad(*parents):
        return Tensor(data, False, parents, backward)
    return Tensor(data)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and linear algebra
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a._accum(_unbroadcast(g * b.data, a.shape))
        b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: a._accum(g * c))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(B, m) @ (m, n)."""

    def backward(g):
        if a.wants_grad:
            a._accum(g @ b.data.T)
        if b.wants_grad:
            b._accum(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0).astype(a.data.dtype), (a,), lambda g: a._accum(g * mask))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: a._accum(g.reshape(old)))


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.shape[0], -1))


def mean_axis(a: Tensor, axis: int) -> Tensor:
    n = a.shape[axis]

    def backward(g):
        a._accum(np.broadcast_to(np.expand_dims(g, axis) / n, a.shape).astype(a.data.dtype))

    return _make(a.data.mean(axis=axis), (a,), backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    if not train or p <= 0:
        return a
    keep = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return _make(a.data * keep, (a,), lambda g: a._accum(g * keep))


# ---------------------------------------------------------------------------
# Convolution and pooling
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """'same'-padded stride-1 convolution. x (B, Cin, L), w (Cout, Cin, K), b (Cout,)."""
    B, cin, L = x.shape
    cout, _, K = w.shape
    left = (K - 1) // 2
    right = K - 1 - left
    xp = np.pad(x.data, ((0, 0), (0, 0), (left, right)))
    # channel-major im2col: cols[b, c*K + k, t] = xp[b, c, t + k]
    cols = np.ascontiguousarray(sliding_window_view(xp, L, axis=2)[:, :, :K, :]).reshape(B, cin * K, L)
    wm = w.data.reshape(cout, cin * K)
    out = np.matmul(wm, cols) + b.data[:, None]

    def backward(g):
        if w.wants_grad:
            gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)
            w._accum(gw.reshape(w.shape))
        b._accum(g.sum(axis=(0, 2)))
        if x.wants_grad:
            dcols = np.matmul(wm.T, g).reshape(B, cin, K, L)
            dxp = np.zeros_like(xp)
            for k in range(K):
                dxp[:, :, k:k + L] += dcols[:, :, k, :]
            x._accum(dxp[:, :, left:left + L])

    return _make(out, (x, w, b), backward)


def maxpool1d(x: Tensor, size: int) -> Tensor:
    B, C, L = x.shape
    Lo = L // size
    if Lo == 0:
        raise ValueError(f"cannot max-pool length {L} by {size}")
    win = x.data[:, :, :Lo * size].reshape(B, C, Lo, size)
    arg = win.argmax(axis=3)
    out = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]

    def backward(g):
        dwin = np.zeros((B, C, Lo, size), dtype=g.dtype)
        np.put_along_axis(dwin, arg[..., None], g[..., None], axis=3)
        dx = np.zeros(x.shape, dtype=g.dtype)
        dx[:, :, :Lo * size] = dwin.reshape(B, C, Lo * size)
        x._accum(dx)

    return _make(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    return mean_axis(x, 2)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running: dict, train: bool,
               momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Normalizes over every axis except 1 (channels / features)."""
    axes = (0,) if x.data.ndim == 2 else (0, 2)
    shape = [1] * x.data.ndim
    shape[1] = -1
    if train:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running["mean"] = (1 - momentum) * running["mean"] + momentum * mu
        running["var"] = (1 - momentum) * running["var"] + momentum * var
    else:
        mu, var = running["mean"], running["var"]
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(shape)) * inv.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)
    m = x.data.size // x.data.shape[1]

    def backward(g):
        gamma._accum((g * xhat).sum(axis=axes))
        beta._accum(g.sum(axis=axes))
        dxhat = g * gamma.data.reshape(shape)
        if train:
            dx = (inv.reshape(shape) / m) * (m * dxhat - dxhat.sum(axis=axes).reshape(shape)
                                             - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape))
        else:
            dx = dxhat * inv.reshape(shape)
        x._accum(dx.astype(x.data.dtype))

    return _make(out.astype(x.data.dtype), (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# Recurrent
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Single-layer LSTM returning the last hidden state.

    x (B, T, D); wx (D, 4H); wh (H, 4H); b (4H,). Gate order i, f, g, o.
    """
    B, T, D = x.shape
    H = wh.shape[0]
    dt = x.data.dtype
    h = np.zeros((B, H), dtype=dt)
    c = np.zeros((B, H), dtype=dt)
    xw = (x.data.reshape(B * T, D) @ wx.data).reshape(B, T, 4 * H) + b.data
    cache = []
    for t in range(T):
        z = xw[:, t] + h @ wh.data
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * gg
        tc = np.tanh(c)
        h = o * tc
        cache.append((i, f, gg, o, c_prev, h_prev, tc))

    def backward(gh):
        dwh = np.zeros_like(wh.data)
        dz_all = np.empty((B, T, 4 * H), dtype=dt)
        dh = gh
        dc = np.zeros((B, H), dtype=dt)
        for t in reversed(range(T)):
            i, f, gg, o, c_prev, h_prev, tc = cache[t]
            do = dh * tc
            dc = dc + dh * o * (1 - tc * tc)
            di = dc * gg
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - gg * gg), do * o * (1 - o)], axis=1)
            dz_all[:, t] = dz
            dwh += h_prev.T @ dz
            dh = dz @ wh.data.T
            dc = dc * f
        flat = dz_all.reshape(B * T, 4 * H)
        wx._accum(x.data.reshape(B * T, D).T @ flat)
        wh._accum(dwh)
        b._accum(flat.sum(axis=0))
        if x.wants_grad:
            x._accum((flat @ wx.data.T).reshape(B, T, D))

    return _make(h, (x, wx, wh, b), backward)


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                 lambda g: a._accum(np.ascontiguousarray(g.transpose(inv))))


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits).

    With two classes this equals binary cross-entropy on the positive-class
    probability.
    """
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        logits._accum((p * (g / n)).astype(logits.data.dtype))

    return _make(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward)


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred.data - target
    n = diff.size

    def backward(g):
        pred._accum((2.0 * g / n * diff).astype(pred.data.dtype))

    return _make(np.asarray((diff * diff).mean(), dtype=pred.data.dtype), (pred,), backward)
