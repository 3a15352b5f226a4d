"""NumPy reference kernels for the LSTM cell and full-sequence recurrence.

The compiled extension (_fast.pyx) mirrors these functions one for one;
tests assert both backends agree. Gate order everywhere: input, forget,
cell-candidate, output. Weight layout: w_input (4h, d_in), w_hidden
(4h, h), bias (4h,). All backward functions ACCUMULATE (+=) into the
gradient buffers they are handed.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_step_forward(x, h_prev, c_prev, w_input, w_hidden, bias):
    """One cell step. Returns (h, c, i, f, g, o, tanh_c)."""
    hsz = h_prev.shape[0]
    z = w_input @ x + w_hidden @ h_prev + bias
    i = _sigmoid(z[:hsz])
    f = _sigmoid(z[hsz : 2 * hsz])
    g = np.tanh(z[2 * hsz : 3 * hsz])
    o = _sigmoid(z[3 * hsz :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, i, f, g, o, tc


def lstm_step_backward(dh, dc, x, h_prev, c_prev, w_input, w_hidden,
                       i, f, g, o, tc,
                       dx, dh_prev, dc_prev, dw_input, dw_hidden, dbias):
    """Backward of one cell step given dL/dh and dL/dc of this step."""
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    dzi = dct * g * i * (1.0 - i)
    dzf = dct * c_prev * f * (1.0 - f)
    dzg = dct * i * (1.0 - g * g)
    dzo = do * o * (1.0 - o)
    dc_prev += dct * f
    dz = np.concatenate([dzi, dzf, dzg, dzo])
    dw_input += np.outer(dz, x)
    dw_hidden += np.outer(dz, h_prev)
    dbias += dz
    dx += w_input.T @ dz
    dh_prev += w_hidden.T @ dz


def lstm_seq_forward(xs, w_input, w_hidden, bias):
    """Run a whole sequence from zero states.

    Returns (hs, cs, gi, gf, gg, go, gtc), all (M, h) arrays; row t holds
    the step-t states and gate activations needed by the backward pass.
    """
    m = xs.shape[0]
    hsz = w_hidden.shape[1]
    hs = np.empty((m, hsz))
    cs = np.empty((m, hsz))
    gi = np.empty((m, hsz))
    gf = np.empty((m, hsz))
    gg = np.empty((m, hsz))
    go = np.empty((m, hsz))
    gtc = np.empty((m, hsz))
    h = np.zeros(hsz)
    c = np.zeros(hsz)
    for t in range(m):
        h, c, i, f, g, o, tc = lstm_step_forward(xs[t], h, c, w_input, w_hidden, bias)
        hs[t] = h
        cs[t] = c
        gi[t] = i
        gf[t] = f
        gg[t] = g
        go[t] = o
        gtc[t] = tc
    return hs, cs, gi, gf, gg, go, gtc


def lstm_seq_backward(dhs, xs, hs, cs, gi, gf, gg, go, gtc, w_input, w_hidden,
                      dxs, dw_input, dw_hidden, dbias):
    """Backpropagation through time over the whole sequence."""
    m, hsz = hs.shape
    zero = np.zeros(hsz)
    dh_carry = np.zeros(hsz)
    dc_carry = np.zeros(hsz)
    for t in range(m - 1, -1, -1):
        dh = dhs[t] + dh_carry
        h_prev = hs[t - 1] if t > 0 else zero
        c_prev = cs[t - 1] if t > 0 else zero
        dh_carry = np.zeros(hsz)
        dc_next = np.zeros(hsz)
        lstm_step_backward(dh, dc_carry, xs[t], h_prev, c_prev, w_input, w_hidden,
                           gi[t], gf[t], gg[t], go[t], gtc[t],
                           dxs[t], dh_carry, dc_next, dw_input, dw_hidden, dbias)
        dc_carry = dc_next
