"""Batched bidirectional LSTM with manual backpropagation through time.

Sequences are padded to a common length; `lengths` marks the valid prefix
of each row.  The forward recurrence zeroes every cached quantity at padded
positions, which makes the backward recurrence correct without masking
(all padded contributions vanish identically).

The per-timestep recurrence is the hot kernel: it runs as a numba-compiled
loop or as a vectorized numpy twin, selected by stacksql.numerics.backend.
Gate packing order along the 4h axis is input, forget, cell, output.
"""

import math
from dataclasses import dataclass

import numpy as np

from stacksql.numerics.backend import active_backend, njit
from stacksql.numerics.linalg import ShapeError, sigmoid, uniform_init


@dataclass
class LstmParams:
    """Single-direction weights: wx (4h, in), wh (4h, h), b (4h,)."""

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    @property
    def hidden_dim(self):
        return self.wh.shape[1]

    @property
    def input_dim(self):
        return self.wx.shape[1]


@dataclass
class BiLstmParams:
    """Forward and backward direction parameter sets of identical shapes."""

    fwd: LstmParams
    bwd: LstmParams

    @property
    def hidden_dim(self):
        return self.fwd.hidden_dim

    @property
    def input_dim(self):
        return self.fwd.input_dim

    @property
    def output_dim(self):
        return 2 * self.fwd.hidden_dim


def _init_direction(rng, input_dim, hidden_dim):
    h4 = 4 * hidden_dim
    return LstmParams(
        wx=uniform_init(rng, (h4, input_dim), input_dim),
        wh=uniform_init(rng, (h4, hidden_dim), hidden_dim),
        b=uniform_init(rng, (h4,), hidden_dim),
    )


def init_bilstm(rng, input_dim, hidden_dim):
    if hidden_dim <= 0 or input_dim <= 0:
        raise ShapeError(f"invalid LSTM dims in={input_dim} hidden={hidden_dim}")
    return BiLstmParams(
        fwd=_init_direction(rng, input_dim, hidden_dim),
        bwd=_init_direction(rng, input_dim, hidden_dim),
    )


# ---------------------------------------------------------------------------
# Recurrent loops: numba kernel + numpy twin
# ---------------------------------------------------------------------------


@njit
def _loop_forward_nb(xg, wh_t, lengths):
    B, T, H4 = xg.shape
    h = H4 // 4
    gi = np.zeros((B, T, h))
    gf = np.zeros((B, T, h))
    gg = np.zeros((B, T, h))
    go = np.zeros((B, T, h))
    cs = np.zeros((B, T, h))
    hs = np.zeros((B, T, h))
    hprev = np.zeros((B, h))
    cprev = np.zeros((B, h))
    for t in range(T):
        a = np.dot(hprev, wh_t)
        for b in range(B):
            if t >= lengths[b]:
                continue
            for k in range(h):
                iv = 1.0 / (1.0 + math.exp(-(a[b, k] + xg[b, t, k])))
                fv = 1.0 / (1.0 + math.exp(-(a[b, h + k] + xg[b, t, h + k])))
                gv = math.tanh(a[b, 2 * h + k] + xg[b, t, 2 * h + k])
                ov = 1.0 / (1.0 + math.exp(-(a[b, 3 * h + k] + xg[b, t, 3 * h + k])))
                cv = fv * cprev[b, k] + iv * gv
                hv = ov * math.tanh(cv)
                gi[b, t, k] = iv
                gf[b, t, k] = fv
                gg[b, t, k] = gv
                go[b, t, k] = ov
                cs[b, t, k] = cv
                hs[b, t, k] = hv
                hprev[b, k] = hv
                cprev[b, k] = cv
    return gi, gf, gg, go, cs, hs


def _loop_forward_np(xg, wh_t, lengths):
    B, T, H4 = xg.shape
    h = H4 // 4
    gi = np.zeros((B, T, h))
    gf = np.zeros((B, T, h))
    gg = np.zeros((B, T, h))
    go = np.zeros((B, T, h))
    cs = np.zeros((B, T, h))
    hs = np.zeros((B, T, h))
    hprev = np.zeros((B, h))
    cprev = np.zeros((B, h))
    for t in range(T):
        a = xg[:, t, :] + hprev @ wh_t
        alive = (t < lengths).astype(np.float64)[:, None]
        iv = sigmoid(a[:, :h]) * alive
        fv = sigmoid(a[:, h : 2 * h]) * alive
        gv = np.tanh(a[:, 2 * h : 3 * h]) * alive
        ov = sigmoid(a[:, 3 * h :]) * alive
        cv = (fv * cprev + iv * gv) * alive
        hv = ov * np.tanh(cv) * alive
        gi[:, t] = iv
        gf[:, t] = fv
        gg[:, t] = gv
        go[:, t] = ov
        cs[:, t] = cv
        hs[:, t] = hv
        hprev = hv
        cprev = cv
    return gi, gf, gg, go, cs, hs


@njit
def _loop_backward_nb(dhs, gi, gf, gg, go, cs, wh):
    B, T, h = dhs.shape
    dgates = np.zeros((B, T, 4 * h))
    dg_t = np.zeros((B, 4 * h))
    dhc = np.zeros((B, h))
    dcc = np.zeros((B, h))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for k in range(h):
                dht = dhs[b, t, k] + dhc[b, k]
                tc = math.tanh(cs[b, t, k])
                dov = dht * tc
                dcv = dcc[b, k] + dht * go[b, t, k] * (1.0 - tc * tc)
                div = dcv * gg[b, t, k]
                dgv = dcv * gi[b, t, k]
                cp = cs[b, t - 1, k] if t > 0 else 0.0
                dfv = dcv * cp
                iv = gi[b, t, k]
                fv = gf[b, t, k]
                gv = gg[b, t, k]
                ov = go[b, t, k]
                dg_t[b, k] = div * iv * (1.0 - iv)
                dg_t[b, h + k] = dfv * fv * (1.0 - fv)
                dg_t[b, 2 * h + k] = dgv * (1.0 - gv * gv)
                dg_t[b, 3 * h + k] = dov * ov * (1.0 - ov)
                dcc[b, k] = dcv * fv
        dgates[:, t, :] = dg_t
        dhc = np.dot(dg_t, wh)
    return dgates


def _loop_backward_np(dhs, gi, gf, gg, go, cs, wh):
    B, T, h = dhs.shape
    dgates = np.zeros((B, T, 4 * h))
    dhc = np.zeros((B, h))
    dcc = np.zeros((B, h))
    for t in range(T - 1, -1, -1):
        dht = dhs[:, t] + dhc
        tc = np.tanh(cs[:, t])
        dov = dht * tc
        dcv = dcc + dht * go[:, t] * (1.0 - tc * tc)
        div = dcv * gg[:, t]
        dgv = dcv * gi[:, t]
        cp = cs[:, t - 1] if t > 0 else np.zeros((B, h))
        dfv = dcv * cp
        dgates[:, t, :h] = div * gi[:, t] * (1.0 - gi[:, t])
        dgates[:, t, h : 2 * h] = dfv * gf[:, t] * (1.0 - gf[:, t])
        dgates[:, t, 2 * h : 3 * h] = dgv * (1.0 - gg[:, t] ** 2)
        dgates[:, t, 3 * h :] = dov * go[:, t] * (1.0 - go[:, t])
        dcc = dcv * gf[:, t]
        dhc = dgates[:, t] @ wh
    return dgates


@njit
def _seq_forward_nb(xg, wh_t, h0, c0):
    T, H4 = xg.shape
    h = H4 // 4
    hs = np.zeros((T, h))
    hc = h0.copy()
    cc = c0.copy()
    for t in range(T):
        a = np.dot(hc, wh_t)
        for k in range(h):
            iv = 1.0 / (1.0 + math.exp(-(a[k] + xg[t, k])))
            fv = 1.0 / (1.0 + math.exp(-(a[h + k] + xg[t, h + k])))
            gv = math.tanh(a[2 * h + k] + xg[t, 2 * h + k])
            ov = 1.0 / (1.0 + math.exp(-(a[3 * h + k] + xg[t, 3 * h + k])))
            cv = fv * cc[k] + iv * gv
            hv = ov * math.tanh(cv)
            hs[t, k] = hv
            hc[k] = hv
            cc[k] = cv
    return hs, hc, cc


def _seq_forward_np(xg, wh_t, h0, c0):
    T, H4 = xg.shape
    h = H4 // 4
    hs = np.zeros((T, h))
    hc = h0.copy()
    cc = c0.copy()
    for t in range(T):
        a = xg[t] + hc @ wh_t
        iv = sigmoid(a[:h])
        fv = sigmoid(a[h : 2 * h])
        gv = np.tanh(a[2 * h : 3 * h])
        ov = sigmoid(a[3 * h :])
        cc = fv * cc + iv * gv
        hc = ov * np.tanh(cc)
        hs[t] = hc
    return hs, hc, cc


def seq_forward(xg, wh_t, h0, c0):
    """Cache-free single-sequence recurrence from an initial state.

    Used on the inference path, where no backward pass is needed.
    """
    if active_backend() == "numba":
        return _seq_forward_nb(xg, wh_t, h0, c0)
    return _seq_forward_np(xg, wh_t, h0, c0)


def _loop_forward(xg, wh_t, lengths):
    if active_backend() == "numba":
        return _loop_forward_nb(xg, wh_t, lengths)
    return _loop_forward_np(xg, wh_t, lengths)


def _loop_backward(dhs, caches, wh):
    gi, gf, gg, go, cs = caches
    if active_backend() == "numba":
        return _loop_backward_nb(dhs, gi, gf, gg, go, cs, wh)
    return _loop_backward_np(dhs, gi, gf, gg, go, cs, wh)


# ---------------------------------------------------------------------------
# Direction and BiLSTM wrappers
# ---------------------------------------------------------------------------


def reverse_padded(x, lengths):
    """Reverse each row's valid prefix, keeping padding at the tail."""
    y = np.zeros_like(x)
    for b, n in enumerate(lengths):
        if n:
            y[b, :n] = x[b, n - 1 :: -1]
    return y


def _direction_forward(p, x, lengths):
    xg = x @ p.wx.T + p.b
    wh_t = np.ascontiguousarray(p.wh.T)
    gi, gf, gg, go, cs, hs = _loop_forward(xg, wh_t, lengths)
    cache = (x, (gi, gf, gg, go, cs), hs)
    return hs, cache


def _direction_backward(p, cache, dhs):
    x, gates, hs = cache
    dgates = _loop_backward(dhs, gates, p.wh)
    B, T, H4 = dgates.shape
    dg2 = dgates.reshape(B * T, H4)
    dx = (dg2 @ p.wx).reshape(B, T, -1)
    dwx = dg2.T @ x.reshape(B * T, -1)
    hprev = np.zeros_like(hs)
    hprev[:, 1:] = hs[:, :-1]
    dwh = dg2.T @ hprev.reshape(B * T, -1)
    db = dg2.sum(axis=0)
    return dx, (dwx, dwh, db)


def bilstm_batch_forward(params, x, lengths):
    """Run both directions over a padded batch.

    x: (B, T, input_dim); lengths: (B,) int array of valid prefix sizes.
    Returns (out, cache) with out (B, T, 2h); padded positions are zero.
    """
    x = np.asarray(x, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if x.ndim != 3:
        raise ShapeError(f"expected (B, T, input_dim) input, got shape {x.shape}")
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise ShapeError("empty batch or zero-length padding")
    if x.shape[2] != params.input_dim:
        raise ShapeError(f"input width {x.shape[2]} != lstm input_dim {params.input_dim}")
    if lengths.shape != (x.shape[0],) or lengths.min() < 1 or lengths.max() > x.shape[1]:
        raise ShapeError("lengths must be in [1, T] with one entry per batch row")
    hs_f, cache_f = _direction_forward(params.fwd, x, lengths)
    xrev = reverse_padded(x, lengths)
    hs_brev, cache_b = _direction_forward(params.bwd, xrev, lengths)
    hs_b = reverse_padded(hs_brev, lengths)
    out = np.concatenate([hs_f, hs_b], axis=2)
    cache = (lengths, cache_f, cache_b)
    return out, cache


def bilstm_batch_backward(params, cache, dout):
    """Backward through bilstm_batch_forward.

    dout must be zero at padded positions.  Returns (dx, grads) where grads
    is a dict with keys fwd.wx/fwd.wh/fwd.b/bwd.wx/bwd.wh/bwd.b.
    """
    lengths, cache_f, cache_b = cache
    h = params.hidden_dim
    dhs_f = np.ascontiguousarray(dout[:, :, :h])
    dhs_b = reverse_padded(np.ascontiguousarray(dout[:, :, h:]), lengths)
    dx_f, (dwx_f, dwh_f, db_f) = _direction_backward(params.fwd, cache_f, dhs_f)
    dxrev, (dwx_b, dwh_b, db_b) = _direction_backward(params.bwd, cache_b, dhs_b)
    dx = dx_f + reverse_padded(dxrev, lengths)
    grads = {
        "fwd.wx": dwx_f,
        "fwd.wh": dwh_f,
        "fwd.b": db_f,
        "bwd.wx": dwx_b,
        "bwd.wh": dwh_b,
        "bwd.b": db_b,
    }
    return dx, grads


def bilstm_forward(params, inputs):
    """Encode one sequence of vectors; returns a (T, 2h) matrix.

    Row t is the forward hidden state at t concatenated with the backward
    hidden state at t.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"expected a nonempty (T, input_dim) sequence, got shape {x.shape}")
    out, _ = bilstm_batch_forward(params, x[None, :, :], np.array([x.shape[0]]))
    return out[0]


def bilstm_final_rows(out, lengths):
    """Final-state row per batch element: forward state at the last valid
    position concatenated with the backward state read at position 0."""
    B, _, d2 = out.shape
    h = d2 // 2
    rows = np.empty((B, d2))
    for b, n in enumerate(lengths):
        rows[b, :h] = out[b, n - 1, :h]
        rows[b, h:] = out[b, 0, h:]
    return rows


def bilstm_final_rows_backward(drows, lengths, T):
    """Scatter final-row gradients back to a (B, T, 2h) dout tensor."""
    B, d2 = drows.shape
    h = d2 // 2
    dout = np.zeros((B, T, d2))
    for b, n in enumerate(lengths):
        dout[b, n - 1, :h] = drows[b, :h]
        dout[b, 0, h:] = drows[b, h:]
    return dout
