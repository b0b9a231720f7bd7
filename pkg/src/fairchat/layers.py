"""Parameter containers and layer primitives built on the autograd tape."""

from __future__ import annotations

import numpy as np

from fairchat import autograd as ag
from fairchat.autograd import Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_in, fan_out))


class Module:
    """Minimal parameter registry with nested-module traversal."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False
        return self

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ValueError(f"state dict mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            if p.data.shape != state[name].shape:
                raise ValueError(
                    f"shape mismatch for {name}: {p.data.shape} vs {state[name].shape}"
                )
            p.data = np.array(state[name], dtype=np.float64)


class Linear(Module):
    def __init__(self, fan_in, fan_out, rng, bias=True):
        self.w = Parameter(glorot(rng, fan_in, fan_out))
        self.b = Parameter(np.zeros(fan_out)) if bias else None

    def __call__(self, x):
        out = ag.matmul(x, self.w)
        return ag.add(out, self.b) if self.b is not None else out


class Embedding(Module):
    def __init__(self, vocab_size, dim, rng):
        self.weight = Parameter(rng.normal(0.0, 0.1, size=(vocab_size, dim)))

    def __call__(self, ids):
        return ag.embedding(self.weight, ids)

    def soft(self, y):
        """Expected embedding under a soft one-hot distribution (B, V)."""
        return ag.matmul(y, self.weight)


class GRUCell(Module):
    def __init__(self, input_size, hidden_size, rng):
        self.hidden_size = hidden_size
        self.w = Parameter(glorot(rng, input_size, 3 * hidden_size, (input_size, 3 * hidden_size)))
        self.u_rz = Parameter(glorot(rng, hidden_size, 2 * hidden_size, (hidden_size, 2 * hidden_size)))
        self.u_n = Parameter(glorot(rng, hidden_size, hidden_size, (hidden_size, hidden_size)))
        self.b = Parameter(np.zeros(3 * hidden_size))

    def __call__(self, x, h):
        return ag.gru_cell(x, h, self.w, self.u_rz, self.u_n, self.b)

    def run_seq(self, x_seq, mask=None, h0=None):
        """Sweep a (T, B, E) tensor; returns all hidden states (T, B, H)."""
        if h0 is None:
            h0 = self.initial_state(x_seq.shape[1])
        return ag.gru_seq(x_seq, h0, self.w, self.u_rz, self.u_n, self.b, mask)

    def initial_state(self, batch_size):
        return Tensor(np.zeros((batch_size, self.hidden_size)))


class LSTMCell(Module):
    def __init__(self, input_size, hidden_size, rng):
        self.hidden_size = hidden_size
        self.w = Parameter(glorot(rng, input_size, 4 * hidden_size, (input_size, 4 * hidden_size)))
        self.u = Parameter(glorot(rng, hidden_size, 4 * hidden_size, (hidden_size, 4 * hidden_size)))
        self.b = Parameter(np.zeros(4 * hidden_size))

    def __call__(self, x, h, c):
        hc = ag.lstm_cell(x, h, c, self.w, self.u, self.b)
        hd = self.hidden_size
        return hc[:, :hd], hc[:, hd:]

    def run_seq(self, x_seq, mask=None, h0=None, c0=None):
        """Sweep a (T, B, E) tensor; returns all [h : c] states (T, B, 2H)."""
        if h0 is None:
            h0 = Tensor(np.zeros((x_seq.shape[1], self.hidden_size)))
        if c0 is None:
            c0 = Tensor(np.zeros((x_seq.shape[1], self.hidden_size)))
        return ag.lstm_seq(x_seq, h0, c0, self.w, self.u, self.b, mask)

    def initial_state(self, batch_size):
        zeros = np.zeros((batch_size, self.hidden_size))
        return Tensor(zeros), Tensor(zeros.copy())


class LSTMStack(Module):
    """num_layers LSTM cells, layer ℓ fed by the hidden states of layer ℓ-1."""

    def __init__(self, input_size, hidden_size, num_layers, rng):
        self.hidden_size = hidden_size
        self.cells = [
            LSTMCell(input_size if i == 0 else hidden_size, hidden_size, rng)
            for i in range(num_layers)
        ]

    def __call__(self, x, states):
        new_states = []
        inp = x
        for cell, (h, c) in zip(self.cells, states):
            h, c = cell(inp, h, c)
            new_states.append((h, c))
            inp = h
        return inp, new_states

    def run_seq(self, x_seq, mask=None, states=None):
        """Sweep all layers over a (T, B, E) tensor.

        Returns (top-layer hidden states (T, B, H), final (h, c) per layer).
        """
        hd = self.hidden_size
        steps = x_seq.shape[0]
        inp = x_seq
        finals = []
        for i, cell in enumerate(self.cells):
            h0, c0 = (None, None) if states is None else states[i]
            hc = cell.run_seq(inp, mask=mask, h0=h0, c0=c0)
            finals.append((hc[steps - 1, :, :hd], hc[steps - 1, :, hd:]))
            inp = hc[:, :, :hd]
        return inp, finals

    def initial_state(self, batch_size):
        return [cell.initial_state(batch_size) for cell in self.cells]


class SoftmaxClassifier(Module):
    """Single affine layer with a softmax output distribution."""

    def __init__(self, fan_in, n_classes, rng):
        self.lin = Linear(fan_in, n_classes, rng)

    def __call__(self, x):
        return ag.softmax(self.lin(x))


class ReluMLP(Module):
    """Three-layer ReLU feedforward network with a softmax output."""

    def __init__(self, fan_in, hidden, n_classes, rng):
        self.l1 = Linear(fan_in, hidden, rng)
        self.l2 = Linear(hidden, hidden, rng)
        self.l3 = Linear(hidden, n_classes, rng)

    def __call__(self, x):
        h = ag.relu(self.l1(x))
        h = ag.relu(self.l2(h))
        return ag.softmax(self.l3(h))


def masked_update(h_new, h_prev, mask_col):
    """h = m * h_new + (1 - m) * h_prev for a (B, 1) float mask."""
    m = Tensor(mask_col)
    return ag.add(ag.mul(h_new, m), ag.mul(h_prev, Tensor(1.0 - mask_col)))


def teacher_arrays(ids, mask, bos_id, eos_id, pad_id):
    """Shifted decoder arrays for teacher forcing.

    Returns (inputs, targets, weights): inputs = [bos, w1..wT], targets =
    [w1..wT, eos-at-true-end], weights = 1 on real targets including the
    eos position, 0 on padding.
    """
    batch, length = ids.shape
    inputs = np.concatenate([np.full((batch, 1), bos_id, dtype=np.int64), ids], axis=1)
    targets = np.concatenate([ids, np.full((batch, 1), pad_id, dtype=np.int64)], axis=1)
    weights = np.concatenate([mask, np.zeros((batch, 1))], axis=1)
    lengths = mask.sum(axis=1).astype(np.int64)
    rows = np.arange(batch)
    targets[rows, lengths] = eos_id
    weights[rows, lengths] = 1.0
    inputs = np.where(weights > 0, inputs, pad_id)
    return inputs, targets, weights
