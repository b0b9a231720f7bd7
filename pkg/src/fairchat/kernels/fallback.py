"""Pure-NumPy recurrent and softmax/cross-entropy kernels.

Reference implementation of the kernel contract; the Cython extension in
``_fused`` computes the same results with the elementwise gate math fused
into C loops.  All float arrays are float64 and C-contiguous.

Layouts:
    GRU   w: (E, 3H) gate order [reset, update, candidate]; the hidden
          weights are split into u_rz: (H, 2H) and u_n: (H, H) so the
          recurrence never slices a matrix before a matmul.
    LSTM  w: (E, 4H), u: (H, 4H), b: (4H,), gate order [i, f, g, o].
    Sequences are time-major: x_seq (T, B, E), masks (T, B).

The GRU candidate uses the original formulation
``tanh(x W_n + (r * h) U_n + b_n)`` (reset gate applied to the hidden state
before the matmul).  Masked steps carry the previous state through
unchanged, so the last row of the returned state sequence is the
length-correct final state.
"""

import numpy as np
from scipy.special import expit as _sigmoid

NAME = "numpy"


# -- GRU ------------------------------------------------------------------


def gru_cell_forward(x, h, w, u_rz, u_n, b):
    """One GRU step.  Returns (h_new, cache)."""
    hd = h.shape[1]
    gx = x @ w + b
    gh = h @ u_rz
    r = _sigmoid(gx[:, :hd] + gh[:, :hd])
    z = _sigmoid(gx[:, hd : 2 * hd] + gh[:, hd:])
    rh = r * h
    n = np.tanh(gx[:, 2 * hd :] + rh @ u_n)
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, r, z, n, rh)


def gru_cell_backward(cache, w, u_rz, u_n, dh_new):
    """Gradients of one GRU step.  Returns (dx, dh, dw, du_rz, du_n, db)."""
    x, h, r, z, n, rh = cache
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z

    da_n = dn * (1.0 - n * n)
    drh = da_n @ u_n.T
    dr = drh * h
    dh += drh * r
    da_rz = np.concatenate([dr * r * (1.0 - r), dz * z * (1.0 - z)], axis=1)

    da = np.concatenate([da_rz, da_n], axis=1)
    dx = da @ w.T
    dh += da_rz @ u_rz.T
    dw = x.T @ da
    du_rz = h.T @ da_rz
    du_n = rh.T @ da_n
    db = da.sum(axis=0)
    return dx, dh, dw, du_rz, du_n, db


def gru_seq_forward(x_seq, h0, w, u_rz, u_n, b, mask):
    """Full GRU sweep.  Returns (states (T, B, H), cache).

    states[t] is the post-mask hidden state after step t.
    """
    steps, batch, _ = x_seq.shape
    hd = h0.shape[1]
    gx = (x_seq.reshape(steps * batch, -1) @ w + b).reshape(steps, batch, 3 * hd)
    states = np.empty((steps, batch, hd))
    r_all = np.empty((steps, batch, hd))
    z_all = np.empty((steps, batch, hd))
    n_all = np.empty((steps, batch, hd))
    rh_all = np.empty((steps, batch, hd))
    h = h0
    for t in range(steps):
        rz = _sigmoid(gx[t, :, : 2 * hd] + h @ u_rz)
        r = rz[:, :hd]
        z = rz[:, hd:]
        rh = r * h
        n = np.tanh(gx[t, :, 2 * hd :] + rh @ u_n)
        h_new = (1.0 - z) * n + z * h
        if mask is not None:
            m = mask[t][:, None]
            h_new = m * h_new + (1.0 - m) * h
        r_all[t], z_all[t], n_all[t], rh_all[t] = r, z, n, rh
        states[t] = h_new
        h = h_new
    return states, (x_seq, h0, states, r_all, z_all, n_all, rh_all, mask)


def gru_seq_backward(cache, w, u_rz, u_n, d_states):
    """BPTT for a GRU sweep.  Returns (dx_seq, dh0, dw, du_rz, du_n, db)."""
    x_seq, h0, states, r_all, z_all, n_all, rh_all, mask = cache
    steps, batch, hd = states.shape
    da_full = np.empty((steps, batch, 3 * hd))
    du_rz = np.zeros_like(u_rz)
    du_n = np.zeros_like(u_n)
    dh = np.zeros((batch, hd))
    for t in range(steps - 1, -1, -1):
        dh = dh + d_states[t]
        h_prev = states[t - 1] if t > 0 else h0
        if mask is not None:
            m = mask[t][:, None]
            dh_new = dh * m
            dh_carry = dh * (1.0 - m)
        else:
            dh_new = dh
            dh_carry = 0.0
        r, z, n, rh = r_all[t], z_all[t], n_all[t], rh_all[t]
        dn = dh_new * (1.0 - z)
        dz = dh_new * (h_prev - n)
        dh_prev = dh_new * z
        da_n = dn * (1.0 - n * n)
        drh = da_n @ u_n.T
        dr = drh * h_prev
        dh_prev += drh * r
        da_r = dr * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)
        da_full[t, :, :hd] = da_r
        da_full[t, :, hd : 2 * hd] = da_z
        da_full[t, :, 2 * hd :] = da_n
        da_rz = da_full[t, :, : 2 * hd]
        dh_prev = dh_prev + da_rz @ u_rz.T
        du_rz += h_prev.T @ da_rz
        du_n += rh.T @ da_n
        dh = dh_prev + dh_carry
    flat = da_full.reshape(steps * batch, 3 * hd)
    x_flat = x_seq.reshape(steps * batch, -1)
    dx_seq = (flat @ w.T).reshape(x_seq.shape)
    dw = x_flat.T @ flat
    db = flat.sum(axis=0)
    return dx_seq, dh, dw, du_rz, du_n, db


# -- LSTM -----------------------------------------------------------------


def lstm_cell_forward(x, h, c, w, u, b):
    """One LSTM step.  Returns (h_new, c_new, cache)."""
    hd = h.shape[1]
    a = x @ w + h @ u + b
    i = _sigmoid(a[:, :hd])
    f = _sigmoid(a[:, hd : 2 * hd])
    g = np.tanh(a[:, 2 * hd : 3 * hd])
    o = _sigmoid(a[:, 3 * hd :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new, (x, h, c, i, f, g, o, c_new)


def lstm_cell_backward(cache, w, u, dh_new, dc_new):
    """Gradients of one LSTM step.  Returns (dx, dh, dc, dw, du, db)."""
    x, h, c, i, f, g, o, c_new = cache
    t = np.tanh(c_new)
    do = dh_new * t
    dct = dc_new + dh_new * o * (1.0 - t * t)
    df = dct * c
    dc = dct * f
    di = dct * g
    dg = dct * i
    da = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ],
        axis=1,
    )
    dx = da @ w.T
    dh = da @ u.T
    dw = x.T @ da
    du = h.T @ da
    db = da.sum(axis=0)
    return dx, dh, dc, dw, du, db


def lstm_seq_forward(x_seq, h0, c0, w, u, b, mask):
    """Full LSTM sweep.  Returns (states (T, B, 2H), cache).

    states[t] is the post-mask [h_t : c_t] concatenation after step t.
    """
    steps, batch, _ = x_seq.shape
    hd = h0.shape[1]
    ax = (x_seq.reshape(steps * batch, -1) @ w + b).reshape(steps, batch, 4 * hd)
    states = np.empty((steps, batch, 2 * hd))
    gates = np.empty((steps, batch, 4 * hd))
    c_pre = np.empty((steps, batch, hd))
    h, c = h0, c0
    for t in range(steps):
        a = ax[t] + h @ u
        sig = _sigmoid(a)
        i = sig[:, :hd]
        f = sig[:, hd : 2 * hd]
        g = np.tanh(a[:, 2 * hd : 3 * hd])
        o = sig[:, 3 * hd :]
        c_raw = f * c + i * g
        h_raw = o * np.tanh(c_raw)
        if mask is not None:
            m = mask[t][:, None]
            h_new = m * h_raw + (1.0 - m) * h
            c_new = m * c_raw + (1.0 - m) * c
        else:
            h_new, c_new = h_raw, c_raw
        gates[t, :, :hd] = i
        gates[t, :, hd : 2 * hd] = f
        gates[t, :, 2 * hd : 3 * hd] = g
        gates[t, :, 3 * hd :] = o
        c_pre[t] = c_raw
        states[t, :, :hd] = h_new
        states[t, :, hd:] = c_new
        h, c = h_new, c_new
    return states, (x_seq, h0, c0, states, gates, c_pre, mask)


def lstm_seq_backward(cache, w, u, d_states):
    """BPTT for an LSTM sweep.  Returns (dx_seq, dh0, dc0, dw, du, db)."""
    x_seq, h0, c0, states, gates, c_pre, mask = cache
    steps, batch, hd2 = states.shape
    hd = hd2 // 2
    da_full = np.empty((steps, batch, 4 * hd))
    du = np.zeros_like(u)
    dh = np.zeros((batch, hd))
    dc = np.zeros((batch, hd))
    for t in range(steps - 1, -1, -1):
        dh = dh + d_states[t, :, :hd]
        dc = dc + d_states[t, :, hd:]
        h_prev = states[t - 1, :, :hd] if t > 0 else h0
        c_prev = states[t - 1, :, hd:] if t > 0 else c0
        if mask is not None:
            m = mask[t][:, None]
            dh_new = dh * m
            dc_new = dc * m
            dh_carry = dh * (1.0 - m)
            dc_carry = dc * (1.0 - m)
        else:
            dh_new, dc_new = dh, dc
            dh_carry = dc_carry = 0.0
        i = gates[t, :, :hd]
        f = gates[t, :, hd : 2 * hd]
        g = gates[t, :, 2 * hd : 3 * hd]
        o = gates[t, :, 3 * hd :]
        tc = np.tanh(c_pre[t])
        do = dh_new * tc
        dct = dc_new + dh_new * o * (1.0 - tc * tc)
        df = dct * c_prev
        dc_prev = dct * f
        di = dct * g
        dg = dct * i
        da_full[t, :, :hd] = di * i * (1.0 - i)
        da_full[t, :, hd : 2 * hd] = df * f * (1.0 - f)
        da_full[t, :, 2 * hd : 3 * hd] = dg * (1.0 - g * g)
        da_full[t, :, 3 * hd :] = do * o * (1.0 - o)
        dh_prev = da_full[t] @ u.T
        du += h_prev.T @ da_full[t]
        dh = dh_prev + dh_carry
        dc = dc_prev + dc_carry
    flat = da_full.reshape(steps * batch, 4 * hd)
    x_flat = x_seq.reshape(steps * batch, -1)
    dx_seq = (flat @ w.T).reshape(x_seq.shape)
    dw = x_flat.T @ flat
    db = flat.sum(axis=0)
    return dx_seq, dh, dc, dw, du, db


# -- softmax cross-entropy --------------------------------------------------


def softmax_xent_forward(logits, targets, weights):
    """Weighted-sum softmax cross-entropy.

    Returns (loss, probs) where loss = sum_i weights[i] * CE(logits[i], targets[i]).
    """
    m = logits.max(axis=1, keepdims=True)
    probs = np.exp(logits - m)
    s = probs.sum(axis=1, keepdims=True)
    probs /= s
    n = logits.shape[0]
    picked = (logits[np.arange(n), targets] - m.ravel()) - np.log(s.ravel())
    loss = -(weights * picked).sum()
    return float(loss), probs


def softmax_xent_backward(probs, targets, weights, dloss):
    """Gradient of the weighted-sum cross-entropy wrt the logits."""
    n = probs.shape[0]
    dlogits = probs * weights[:, None]
    dlogits[np.arange(n), targets] -= weights
    dlogits *= dloss
    return dlogits
