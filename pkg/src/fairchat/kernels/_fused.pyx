# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused recurrent and softmax/cross-entropy kernels.

Drop-in twin of ``fallback``: identical signatures, layouts, and math, with
the per-step gate arithmetic fused into C loops.  Input projections and the
large gradient products still go through BLAS via ``np.dot``.
"""

import numpy as np
from scipy.special import expit

from libc.math cimport exp, log, tanh

NAME = "cython"


cdef inline double _sig(double v) nogil:
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    cdef double e = exp(v)
    return e / (1.0 + e)


# -- GRU ------------------------------------------------------------------


def gru_cell_forward(x, h, w, u_rz, u_n, b):
    """One GRU step.  Returns (h_new, cache)."""
    cdef Py_ssize_t bs = x.shape[0], hd = h.shape[1]
    gx = np.dot(x, w)
    gx += b
    gh = np.dot(h, u_rz)
    r = np.empty((bs, hd))
    z = np.empty((bs, hd))
    rh = np.empty((bs, hd))
    cdef double[:, ::1] gx_v = gx, gh_v = gh, h_v = h
    cdef double[:, ::1] r_v = r, z_v = z, rh_v = rh
    cdef Py_ssize_t i, j
    for i in range(bs):
        for j in range(hd):
            r_v[i, j] = _sig(gx_v[i, j] + gh_v[i, j])
            z_v[i, j] = _sig(gx_v[i, hd + j] + gh_v[i, hd + j])
            rh_v[i, j] = r_v[i, j] * h_v[i, j]
    an = np.dot(rh, u_n)
    n = np.empty((bs, hd))
    h_new = np.empty((bs, hd))
    cdef double[:, ::1] an_v = an, n_v = n, hn_v = h_new
    for i in range(bs):
        for j in range(hd):
            n_v[i, j] = tanh(gx_v[i, 2 * hd + j] + an_v[i, j])
            hn_v[i, j] = (1.0 - z_v[i, j]) * n_v[i, j] + z_v[i, j] * h_v[i, j]
    return h_new, (x, h, r, z, n, rh)


def gru_cell_backward(cache, w, u_rz, u_n, dh_new):
    """Gradients of one GRU step.  Returns (dx, dh, dw, du_rz, du_n, db)."""
    x, h, r, z, n, rh = cache
    cdef Py_ssize_t bs = h.shape[0], hd = h.shape[1]
    da = np.empty((bs, 3 * hd))
    dh = np.empty((bs, hd))
    cdef double[:, ::1] da_v = da, dh_v = dh
    cdef double[:, ::1] h_v = h, r_v = r, z_v = z, n_v = n
    cdef double[:, ::1] dhn_v = dh_new
    cdef Py_ssize_t i, j
    cdef double dn, dz
    for i in range(bs):
        for j in range(hd):
            dn = dhn_v[i, j] * (1.0 - z_v[i, j])
            dz = dhn_v[i, j] * (h_v[i, j] - n_v[i, j])
            dh_v[i, j] = dhn_v[i, j] * z_v[i, j]
            da_v[i, hd + j] = dz * z_v[i, j] * (1.0 - z_v[i, j])
            da_v[i, 2 * hd + j] = dn * (1.0 - n_v[i, j] * n_v[i, j])
    drh = np.dot(da[:, 2 * hd :], u_n.T)
    cdef double[:, ::1] drh_v = drh
    cdef double dr
    for i in range(bs):
        for j in range(hd):
            dr = drh_v[i, j] * h_v[i, j]
            dh_v[i, j] += drh_v[i, j] * r_v[i, j]
            da_v[i, j] = dr * r_v[i, j] * (1.0 - r_v[i, j])
    da_rz = da[:, : 2 * hd]
    dx = np.dot(da, w.T)
    dh += np.dot(da_rz, u_rz.T)
    dw = np.dot(x.T, da)
    du_rz = np.dot(h.T, da_rz)
    du_n = np.dot(rh.T, da[:, 2 * hd :])
    db = da.sum(axis=0)
    return dx, dh, dw, du_rz, du_n, db


def gru_seq_forward(x_seq, h0, w, u_rz, u_n, b, mask):
    """Full GRU sweep.  Returns (states (T, B, H), cache).

    Transcendentals run through vectorized expit/np.tanh; the remaining
    gate arithmetic is fused into C loops.
    """
    cdef Py_ssize_t steps = x_seq.shape[0], bs = x_seq.shape[1], hd = h0.shape[1]
    gx = np.dot(x_seq.reshape(steps * bs, -1), w)
    gx += b
    gx = gx.reshape(steps, bs, 3 * hd)
    gx_rz = np.ascontiguousarray(gx[:, :, : 2 * hd])
    gx_n = np.ascontiguousarray(gx[:, :, 2 * hd :])
    states = np.empty((steps, bs, hd))
    r_all = np.empty((steps, bs, hd))
    z_all = np.empty((steps, bs, hd))
    n_all = np.empty((steps, bs, hd))
    rh_all = np.empty((steps, bs, hd))
    pre = np.empty((bs, 2 * hd))
    cdef double[:, :, ::1] st_v = states
    cdef double[:, :, ::1] r_v = r_all, z_v = z_all, n_v = n_all, rh_v = rh_all
    cdef double[:, ::1] h_v = h0
    cdef double[:, ::1] m_v
    cdef bint has_mask = mask is not None
    if has_mask:
        m_v = mask
    cdef Py_ssize_t t, i, j
    cdef double hn, m, hp, nv
    h_arr = h0
    cdef double[:, ::1] n_t_v, rz_v
    for t in range(steps):
        np.dot(h_arr, u_rz, out=pre)
        pre += gx_rz[t]
        rz = expit(pre)
        rz_v = rz
        for i in range(bs):
            for j in range(hd):
                r_v[t, i, j] = rz_v[i, j]
                z_v[t, i, j] = rz_v[i, hd + j]
                rh_v[t, i, j] = rz_v[i, j] * h_v[i, j]
        an = np.dot(np.asarray(rh_all[t]), u_n)
        an += gx_n[t]
        n_t = np.tanh(an, out=an)
        n_t_v = n_t
        for i in range(bs):
            for j in range(hd):
                nv = n_t_v[i, j]
                n_v[t, i, j] = nv
                hp = h_v[i, j]
                hn = (1.0 - rz_v[i, hd + j]) * nv + rz_v[i, hd + j] * hp
                if has_mask:
                    m = m_v[t, i]
                    hn = m * hn + (1.0 - m) * hp
                st_v[t, i, j] = hn
        h_arr = np.asarray(states[t])
        h_v = h_arr
    return states, (x_seq, h0, states, r_all, z_all, n_all, rh_all, mask)


def gru_seq_backward(cache, w, u_rz, u_n, d_states):
    """BPTT for a GRU sweep.  Returns (dx_seq, dh0, dw, du_rz, du_n, db)."""
    x_seq, h0, states, r_all, z_all, n_all, rh_all, mask = cache
    cdef Py_ssize_t steps = states.shape[0], bs = states.shape[1], hd = states.shape[2]
    da_full = np.empty((steps, bs, 3 * hd))
    du_rz = np.zeros_like(u_rz)
    du_n = np.zeros_like(u_n)
    dh = np.zeros((bs, hd))
    cdef double[:, :, ::1] da_v = da_full, ds_v = d_states
    cdef double[:, :, ::1] r_a = r_all, z_a = z_all, n_a = n_all
    cdef double[:, :, ::1] st_v = states
    cdef double[:, ::1] dh_v = dh, h0_v = h0
    cdef double[:, ::1] m_v
    cdef bint has_mask = mask is not None
    if has_mask:
        m_v = mask
    cdef Py_ssize_t t, i, j
    cdef double dhn, dcarry, r, z, n, hp, dn, dz, dr, m
    cdef double[:, ::1] drh_v, hp_v
    dhp_buf = np.empty((bs, hd))
    cdef double[:, ::1] dhp_v = dhp_buf
    for t in range(steps - 1, -1, -1):
        h_prev = np.asarray(states[t - 1]) if t > 0 else h0
        hp_v = h_prev
        # first pass: cell-local grads and candidate pre-activations
        for i in range(bs):
            for j in range(hd):
                dhn = dh_v[i, j] + ds_v[t, i, j]
                if has_mask:
                    m = m_v[t, i]
                    dcarry = dhn * (1.0 - m)
                    dhn = dhn * m
                else:
                    dcarry = 0.0
                r = r_a[t, i, j]
                z = z_a[t, i, j]
                n = n_a[t, i, j]
                hp = hp_v[i, j]
                dn = dhn * (1.0 - z)
                dz = dhn * (hp - n)
                da_v[t, i, hd + j] = dz * z * (1.0 - z)
                da_v[t, i, 2 * hd + j] = dn * (1.0 - n * n)
                dhp_v[i, j] = dhn * z + dcarry
        da_n = np.asarray(da_full[t, :, 2 * hd :])
        drh = np.dot(da_n, u_n.T)
        drh_v = drh
        for i in range(bs):
            for j in range(hd):
                r = r_a[t, i, j]
                hp = hp_v[i, j]
                dr = drh_v[i, j] * hp
                dhp_v[i, j] += drh_v[i, j] * r
                da_v[t, i, j] = dr * r * (1.0 - r)
        da_rz = np.asarray(da_full[t, :, : 2 * hd])
        dh = dhp_buf + np.dot(da_rz, u_rz.T)
        dh_v = dh
        du_rz += np.dot(h_prev.T, da_rz)
        du_n += np.dot(np.asarray(rh_all[t]).T, da_n)
    flat = da_full.reshape(steps * bs, 3 * hd)
    x_flat = x_seq.reshape(steps * bs, -1)
    dx_seq = np.dot(flat, w.T).reshape(x_seq.shape)
    dw = np.dot(x_flat.T, flat)
    db = flat.sum(axis=0)
    return dx_seq, dh, dw, du_rz, du_n, db


# -- LSTM -----------------------------------------------------------------


def lstm_cell_forward(x, h, c, w, u, b):
    """One LSTM step.  Returns (h_new, c_new, cache)."""
    cdef Py_ssize_t bs = x.shape[0], hd = h.shape[1]
    a = np.dot(x, w)
    a += np.dot(h, u)
    a += b
    ig = np.empty((bs, hd))
    fg = np.empty((bs, hd))
    gg = np.empty((bs, hd))
    og = np.empty((bs, hd))
    c_new = np.empty((bs, hd))
    h_new = np.empty((bs, hd))
    cdef double[:, ::1] a_v = a, c_v = c
    cdef double[:, ::1] i_v = ig, f_v = fg, g_v = gg, o_v = og
    cdef double[:, ::1] cn_v = c_new, hn_v = h_new
    cdef Py_ssize_t i, j
    for i in range(bs):
        for j in range(hd):
            i_v[i, j] = _sig(a_v[i, j])
            f_v[i, j] = _sig(a_v[i, hd + j])
            g_v[i, j] = tanh(a_v[i, 2 * hd + j])
            o_v[i, j] = _sig(a_v[i, 3 * hd + j])
            cn_v[i, j] = f_v[i, j] * c_v[i, j] + i_v[i, j] * g_v[i, j]
            hn_v[i, j] = o_v[i, j] * tanh(cn_v[i, j])
    return h_new, c_new, (x, h, c, ig, fg, gg, og, c_new)


def lstm_cell_backward(cache, w, u, dh_new, dc_new):
    """Gradients of one LSTM step.  Returns (dx, dh, dc, dw, du, db)."""
    x, h, c, ig, fg, gg, og, c_new = cache
    cdef Py_ssize_t bs = h.shape[0], hd = h.shape[1]
    da = np.empty((bs, 4 * hd))
    dc = np.empty((bs, hd))
    cdef double[:, ::1] da_v = da, dc_v = dc
    cdef double[:, ::1] c_v = c, cn_v = c_new
    cdef double[:, ::1] i_v = ig, f_v = fg, g_v = gg, o_v = og
    cdef double[:, ::1] dhn_v = dh_new, dcn_v = dc_new
    cdef Py_ssize_t i, j
    cdef double t, dct, di, df, dg, do
    for i in range(bs):
        for j in range(hd):
            t = tanh(cn_v[i, j])
            do = dhn_v[i, j] * t
            dct = dcn_v[i, j] + dhn_v[i, j] * o_v[i, j] * (1.0 - t * t)
            df = dct * c_v[i, j]
            dc_v[i, j] = dct * f_v[i, j]
            di = dct * g_v[i, j]
            dg = dct * i_v[i, j]
            da_v[i, j] = di * i_v[i, j] * (1.0 - i_v[i, j])
            da_v[i, hd + j] = df * f_v[i, j] * (1.0 - f_v[i, j])
            da_v[i, 2 * hd + j] = dg * (1.0 - g_v[i, j] * g_v[i, j])
            da_v[i, 3 * hd + j] = do * o_v[i, j] * (1.0 - o_v[i, j])
    dx = np.dot(da, w.T)
    dh = np.dot(da, u.T)
    dw = np.dot(x.T, da)
    du = np.dot(h.T, da)
    db = da.sum(axis=0)
    return dx, dh, dc, dw, du, db


def lstm_seq_forward(x_seq, h0, c0, w, u, b, mask):
    """Full LSTM sweep.  Returns (states (T, B, 2H), cache)."""
    cdef Py_ssize_t steps = x_seq.shape[0], bs = x_seq.shape[1], hd = h0.shape[1]
    ax = np.dot(x_seq.reshape(steps * bs, -1), w)
    ax += b
    ax = ax.reshape(steps, bs, 4 * hd)
    states = np.empty((steps, bs, 2 * hd))
    gates = np.empty((steps, bs, 4 * hd))
    c_pre = np.empty((steps, bs, hd))
    pre = np.empty((bs, 4 * hd))
    cdef double[:, :, ::1] st_v = states, gt_v = gates, cp_v = c_pre
    cdef double[:, :] h_v = h0, c_v = c0
    cdef double[:, ::1] m_v
    cdef bint has_mask = mask is not None
    if has_mask:
        m_v = mask
    cdef Py_ssize_t t, i, j
    cdef double iv, fv, gv, craw, hraw, m
    cdef double[:, ::1] sig_v, g_t_v, tc_v
    h_arr = h0
    for t in range(steps):
        np.dot(h_arr, u, out=pre)
        pre += ax[t]
        sig = expit(pre)
        g_t = np.tanh(pre[:, 2 * hd : 3 * hd])
        sig_v = sig
        g_t_v = g_t
        for i in range(bs):
            for j in range(hd):
                iv = sig_v[i, j]
                fv = sig_v[i, hd + j]
                gv = g_t_v[i, j]
                gt_v[t, i, j] = iv
                gt_v[t, i, hd + j] = fv
                gt_v[t, i, 2 * hd + j] = gv
                gt_v[t, i, 3 * hd + j] = sig_v[i, 3 * hd + j]
                cp_v[t, i, j] = fv * c_v[i, j] + iv * gv
        tanh_c = np.tanh(np.asarray(c_pre[t]))
        tc_v = tanh_c
        for i in range(bs):
            for j in range(hd):
                craw = cp_v[t, i, j]
                hraw = sig_v[i, 3 * hd + j] * tc_v[i, j]
                if has_mask:
                    m = m_v[t, i]
                    st_v[t, i, j] = m * hraw + (1.0 - m) * h_v[i, j]
                    st_v[t, i, hd + j] = m * craw + (1.0 - m) * c_v[i, j]
                else:
                    st_v[t, i, j] = hraw
                    st_v[t, i, hd + j] = craw
        h_arr = np.ascontiguousarray(states[t, :, :hd])
        h_v = h_arr
        c_v = states[t, :, hd:]
    return states, (x_seq, h0, c0, states, gates, c_pre, mask)


def lstm_seq_backward(cache, w, u, d_states):
    """BPTT for an LSTM sweep.  Returns (dx_seq, dh0, dc0, dw, du, db)."""
    x_seq, h0, c0, states, gates, c_pre, mask = cache
    cdef Py_ssize_t steps = states.shape[0], bs = states.shape[1], hd = states.shape[2] // 2
    da_full = np.empty((steps, bs, 4 * hd))
    du = np.zeros_like(u)
    dh = np.zeros((bs, hd))
    dc = np.zeros((bs, hd))
    cdef double[:, :, ::1] da_v = da_full, ds_v = d_states, gt_v = gates, cp_v = c_pre
    cdef double[:, ::1] dh_v = dh, dc_v = dc
    cdef double[:, ::1] m_v
    cdef bint has_mask = mask is not None
    if has_mask:
        m_v = mask
    cdef Py_ssize_t t, i, j
    cdef double dhn, dcn, dhcarry, dccarry, iv, fv, gv, ov, tc, do, dct, df, di, dg, m
    cdef double[:, :] cpv
    cdef double[:, ::1] tc_v
    for t in range(steps - 1, -1, -1):
        h_prev = np.ascontiguousarray(states[t - 1, :, :hd]) if t > 0 else h0
        cpv = states[t - 1, :, hd:] if t > 0 else c0
        tanh_c = np.tanh(np.asarray(c_pre[t]))
        tc_v = tanh_c
        for i in range(bs):
            for j in range(hd):
                dhn = dh_v[i, j] + ds_v[t, i, j]
                dcn = dc_v[i, j] + ds_v[t, i, hd + j]
                if has_mask:
                    m = m_v[t, i]
                    dhcarry = dhn * (1.0 - m)
                    dccarry = dcn * (1.0 - m)
                    dhn = dhn * m
                    dcn = dcn * m
                else:
                    dhcarry = 0.0
                    dccarry = 0.0
                iv = gt_v[t, i, j]
                fv = gt_v[t, i, hd + j]
                gv = gt_v[t, i, 2 * hd + j]
                ov = gt_v[t, i, 3 * hd + j]
                tc = tc_v[i, j]
                do = dhn * tc
                dct = dcn + dhn * ov * (1.0 - tc * tc)
                df = dct * cpv[i, j]
                dc_v[i, j] = dct * fv + dccarry
                di = dct * gv
                dg = dct * iv
                da_v[t, i, j] = di * iv * (1.0 - iv)
                da_v[t, i, hd + j] = df * fv * (1.0 - fv)
                da_v[t, i, 2 * hd + j] = dg * (1.0 - gv * gv)
                da_v[t, i, 3 * hd + j] = do * ov * (1.0 - ov)
                dh_v[i, j] = dhcarry
        da_t = np.asarray(da_full[t])
        dh = dh + np.dot(da_t, u.T)
        dh_v = dh
        du += np.dot(h_prev.T, da_t)
    flat = da_full.reshape(steps * bs, 4 * hd)
    x_flat = x_seq.reshape(steps * bs, -1)
    dx_seq = np.dot(flat, w.T).reshape(x_seq.shape)
    dw = np.dot(x_flat.T, flat)
    db = flat.sum(axis=0)
    return dx_seq, dh, dc, dw, du, db


# -- softmax cross-entropy ---------------------------------------------------


def softmax_xent_forward(logits, targets, weights):
    """Weighted-sum softmax cross-entropy.  Returns (loss, probs).

    The exp/sum run vectorized; only the picked-logit reduction is a C loop.
    """
    cdef Py_ssize_t n = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    probs = np.exp(logits - m)
    s = probs.sum(axis=1, keepdims=True)
    probs /= s
    cdef double[:, ::1] lg_v = logits
    cdef double[::1] m_v = m.ravel(), s_v = s.ravel(), w_v = weights
    cdef long[::1] t_v = targets
    cdef Py_ssize_t i
    cdef double loss = 0.0
    for i in range(n):
        loss -= w_v[i] * ((lg_v[i, t_v[i]] - m_v[i]) - log(s_v[i]))
    return loss, probs


def softmax_xent_backward(probs, targets, weights, double dloss):
    """Gradient of the weighted-sum cross-entropy wrt the logits."""
    cdef Py_ssize_t n = probs.shape[0], k = probs.shape[1]
    dlogits = np.empty((n, k))
    cdef double[:, ::1] p_v = probs, dl_v = dlogits
    cdef long[::1] t_v = targets
    cdef double[::1] w_v = weights
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(k):
            dl_v[i, j] = p_v[i, j] * w_v[i] * dloss
        dl_v[i, t_v[i]] -= w_v[i] * dloss
    return dlogits
