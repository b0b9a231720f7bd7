"""Kernel backend selection.

The compiled extension (``fairchat.kernels._fused``) is preferred when it
imported cleanly; otherwise the pure-NumPy fallback is used.  Both expose the
same functions with identical semantics.  ``use_backend`` exists for the
benchmark suite and for forcing the fallback in tests; the
FAIRCHAT_FORCE_NUMPY environment variable does the same at import time.
"""

import os

from fairchat.kernels import fallback

_BACKENDS = {"numpy": fallback}

try:
    from fairchat.kernels import _fused

    _BACKENDS["cython"] = _fused
except ImportError:
    _fused = None

_active = _BACKENDS.get("numpy" if os.environ.get("FAIRCHAT_FORCE_NUMPY") else "cython", fallback)


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return _active.NAME


def use_backend(name):
    """Switch the active kernel backend ('numpy' or 'cython')."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}")
    _active = _BACKENDS[name]


def gru_cell_forward(x, h, w, u_rz, u_n, b):
    return _active.gru_cell_forward(x, h, w, u_rz, u_n, b)


def gru_cell_backward(cache, w, u_rz, u_n, dh_new):
    return _active.gru_cell_backward(cache, w, u_rz, u_n, dh_new)


def gru_seq_forward(x_seq, h0, w, u_rz, u_n, b, mask):
    return _active.gru_seq_forward(x_seq, h0, w, u_rz, u_n, b, mask)


def gru_seq_backward(cache, w, u_rz, u_n, d_states):
    return _active.gru_seq_backward(cache, w, u_rz, u_n, d_states)


def lstm_cell_forward(x, h, c, w, u, b):
    return _active.lstm_cell_forward(x, h, c, w, u, b)


def lstm_cell_backward(cache, w, u, dh_new, dc_new):
    return _active.lstm_cell_backward(cache, w, u, dh_new, dc_new)


def lstm_seq_forward(x_seq, h0, c0, w, u, b, mask):
    return _active.lstm_seq_forward(x_seq, h0, c0, w, u, b, mask)


def lstm_seq_backward(cache, w, u, d_states):
    return _active.lstm_seq_backward(cache, w, u, d_states)


def softmax_xent_forward(logits, targets, weights):
    return _active.softmax_xent_forward(logits, targets, weights)


def softmax_xent_backward(probs, targets, weights, dloss):
    return _active.softmax_xent_backward(probs, targets, weights, dloss)
