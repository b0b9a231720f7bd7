"""Tape-based reverse-mode automatic differentiation over NumPy arrays.

Small on purpose: float64 only, 2-D matmuls, and exactly the operations the
models in this package need.  Recurrent cells and the decoder cross-entropy
are single tape nodes backed by the kernel backends in ``fairchat.kernels``.
"""

from __future__ import annotations

import contextlib

import numpy as np

from fairchat import kernels

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of NumPy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accum(self, grad):
        if self.grad is None:
            # copy: callers may pass views into shared buffers
            self.grad = np.array(grad, dtype=np.float64)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += grad

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient requires a scalar tensor")
            grad = np.ones_like(self.data)
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


# -- arithmetic ---------------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _node(a.data + b.data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), backward)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return _node(a.data @ b.data, (a, b), backward)


def getitem(x, idx):
    """Basic (slice/int) indexing only; fancy indexing is not supported."""

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx] += g
            x._accum(full)

    # slicing views are copied so kernel ops always see contiguous arrays
    return _node(np.ascontiguousarray(x.data[idx]), (x,), backward)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offset, offset + size)
                t._accum(g[tuple(sl)])
            offset += size

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


# -- elementwise nonlinearities ----------------------------------------


def tanh(x):
    out_data = np.tanh(x.data)

    def backward(g):
        x._accum(g * (1.0 - out_data * out_data))

    return _node(out_data, (x,), backward)


def sigmoid(x):
    out_data = np.empty_like(x.data)
    pos = x.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        x._accum(g * out_data * (1.0 - out_data))

    return _node(out_data, (x,), backward)


def relu(x):
    def backward(g):
        x._accum(g * (x.data > 0))

    return _node(np.maximum(x.data, 0.0), (x,), backward)


def log_clamped(x, eps=1e-12):
    """log(max(x, eps)); gradient is zero in the clamped region."""
    clipped = np.maximum(x.data, eps)

    def backward(g):
        x._accum(g * (x.data >= eps) / clipped)

    return _node(np.log(clipped), (x,), backward)


def softmax(x):
    """Row-wise softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        x._accum(out_data * (g - inner))

    return _node(out_data, (x,), backward)


# -- reductions ---------------------------------------------------------


def tsum(x, axis=None):
    def backward(g):
        if axis is None:
            x._accum(np.broadcast_to(g, x.data.shape).copy())
        else:
            x._accum(np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy())

    return _node(x.data.sum(axis=axis), (x,), backward)


def tmean(x):
    return tsum(x) / x.data.size


# -- indexed ops --------------------------------------------------------


def select_columns(x, ids):
    """out[i] = x[i, ids[i]] for a 2-D tensor."""
    ids = np.asarray(ids, dtype=np.int64)
    rows = np.arange(x.data.shape[0])

    def backward(g):
        full = np.zeros_like(x.data)
        full[rows, ids] = g
        x._accum(full)

    return _node(x.data[rows, ids], (x,), backward)


def embedding(weight, ids):
    """Row gather: out = weight[ids] for integer ids of shape (B,)."""
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids, g)
        weight._accum(full)

    return _node(weight.data[ids], (weight,), backward)


def embedding_seq(weight, ids):
    """Time-major sequence gather: (B, T) int ids -> (T, B, E)."""
    ids = np.asarray(ids, dtype=np.int64)
    flat = ids.T.ravel()

    def backward(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, flat, g.reshape(-1, weight.data.shape[1]))
        weight._accum(full)

    out = np.ascontiguousarray(weight.data[ids].transpose(1, 0, 2))
    return _node(out, (weight,), backward)


def reshape(x, shape):
    old_shape = x.data.shape

    def backward(g):
        x._accum(g.reshape(old_shape))

    return _node(np.ascontiguousarray(x.data).reshape(shape), (x,), backward)


def stack(tensors):
    """Stack equal-shaped tensors along a new leading axis."""
    tensors = list(tensors)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accum(g[i])

    return _node(np.stack([t.data for t in tensors]), tuple(tensors), backward)


# -- fused kernel ops ---------------------------------------------------


def gru_cell(x, h, w, u_rz, u_n, b):
    h_new, cache = kernels.gru_cell_forward(x.data, h.data, w.data, u_rz.data, u_n.data, b.data)

    def backward(g):
        dx, dh, dw, du_rz, du_n, db = kernels.gru_cell_backward(
            cache, w.data, u_rz.data, u_n.data, np.ascontiguousarray(g)
        )
        for tensor, grad in zip((x, h, w, u_rz, u_n, b), (dx, dh, dw, du_rz, du_n, db)):
            if tensor.requires_grad:
                tensor._accum(grad)

    return _node(h_new, (x, h, w, u_rz, u_n, b), backward)


def gru_seq(x_seq, h0, w, u_rz, u_n, b, mask=None):
    """Full GRU sweep over a (T, B, E) input; returns all states (T, B, H)."""
    states, cache = kernels.gru_seq_forward(
        x_seq.data, h0.data, w.data, u_rz.data, u_n.data, b.data, mask
    )

    def backward(g):
        dx, dh0, dw, du_rz, du_n, db = kernels.gru_seq_backward(
            cache, w.data, u_rz.data, u_n.data, np.ascontiguousarray(g)
        )
        for tensor, grad in zip((x_seq, h0, w, u_rz, u_n, b), (dx, dh0, dw, du_rz, du_n, db)):
            if tensor.requires_grad:
                tensor._accum(grad)

    return _node(states, (x_seq, h0, w, u_rz, u_n, b), backward)


def lstm_cell(x, h, c, w, u, b):
    """Returns the concatenation [h_new : c_new] as one (B, 2H) tensor."""
    h_new, c_new, cache = kernels.lstm_cell_forward(x.data, h.data, c.data, w.data, u.data, b.data)
    hd = h.data.shape[1]

    def backward(g):
        g = np.ascontiguousarray(g)
        dx, dh, dc, dw, du, db = kernels.lstm_cell_backward(
            cache, w.data, u.data, np.ascontiguousarray(g[:, :hd]), np.ascontiguousarray(g[:, hd:])
        )
        for tensor, grad in zip((x, h, c, w, u, b), (dx, dh, dc, dw, du, db)):
            if tensor.requires_grad:
                tensor._accum(grad)

    return _node(np.concatenate([h_new, c_new], axis=1), (x, h, c, w, u, b), backward)


def lstm_seq(x_seq, h0, c0, w, u, b, mask=None):
    """Full LSTM sweep; returns all [h_t : c_t] states as (T, B, 2H)."""
    states, cache = kernels.lstm_seq_forward(
        x_seq.data, h0.data, c0.data, w.data, u.data, b.data, mask
    )

    def backward(g):
        dx, dh0, dc0, dw, du, db = kernels.lstm_seq_backward(
            cache, w.data, u.data, np.ascontiguousarray(g)
        )
        for tensor, grad in zip((x_seq, h0, c0, w, u, b), (dx, dh0, dc0, dw, du, db)):
            if tensor.requires_grad:
                tensor._accum(grad)

    return _node(states, (x_seq, h0, c0, w, u, b), backward)


def softmax_xent(logits, targets, weights):
    """Weighted sum over rows of softmax cross-entropy; scalar output."""
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    loss, probs = kernels.softmax_xent_forward(np.ascontiguousarray(logits.data), targets, weights)

    def backward(g):
        logits._accum(kernels.softmax_xent_backward(probs, targets, weights, float(g)))

    return _node(loss, (logits,), backward)
