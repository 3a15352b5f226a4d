# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM kernels; mirrors _ref.py function for function.

Gate order: input, forget, cell-candidate, output. w_input is (4h, d_in),
w_hidden (4h, h), bias (4h,), all C-contiguous float64. Backward functions
accumulate into the buffers they are handed.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

BACKEND = "compiled"


cdef inline double _sig(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef void _step_fwd(const double* x, const double* h_prev, const double* c_prev,
                    const double* wi, const double* wh, const double* b,
                    Py_ssize_t d, Py_ssize_t h,
                    double* h_out, double* c_out,
                    double* gi, double* gf, double* gg, double* go,
                    double* gtc) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double zi, zf, zg, zo
    for j in range(h):
        zi = b[j]
        zf = b[h + j]
        zg = b[2 * h + j]
        zo = b[3 * h + j]
        for k in range(d):
            zi += wi[j * d + k] * x[k]
            zf += wi[(h + j) * d + k] * x[k]
            zg += wi[(2 * h + j) * d + k] * x[k]
            zo += wi[(3 * h + j) * d + k] * x[k]
        for k in range(h):
            zi += wh[j * h + k] * h_prev[k]
            zf += wh[(h + j) * h + k] * h_prev[k]
            zg += wh[(2 * h + j) * h + k] * h_prev[k]
            zo += wh[(3 * h + j) * h + k] * h_prev[k]
        gi[j] = _sig(zi)
        gf[j] = _sig(zf)
        gg[j] = tanh(zg)
        go[j] = _sig(zo)
        c_out[j] = gf[j] * c_prev[j] + gi[j] * gg[j]
        gtc[j] = tanh(c_out[j])
        h_out[j] = go[j] * gtc[j]


cdef void _step_bwd(const double* dh, const double* dc, const double* x,
                    const double* h_prev, const double* c_prev,
                    const double* wi, const double* wh,
                    const double* gi, const double* gf, const double* gg,
                    const double* go, const double* gtc,
                    Py_ssize_t d, Py_ssize_t h,
                    double* dx, double* dh_prev, double* dc_prev,
                    double* dwi, double* dwh, double* db) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double dct, dzi, dzf, dzg, dzo, do_
    for j in range(h):
        do_ = dh[j] * gtc[j]
        dct = dc[j] + dh[j] * go[j] * (1.0 - gtc[j] * gtc[j])
        dzi = dct * gg[j] * gi[j] * (1.0 - gi[j])
        dzf = dct * c_prev[j] * gf[j] * (1.0 - gf[j])
        dzg = dct * gi[j] * (1.0 - gg[j] * gg[j])
        dzo = do_ * go[j] * (1.0 - go[j])
        dc_prev[j] += dct * gf[j]
        db[j] += dzi
        db[h + j] += dzf
        db[2 * h + j] += dzg
        db[3 * h + j] += dzo
        for k in range(d):
            dwi[j * d + k] += dzi * x[k]
            dwi[(h + j) * d + k] += dzf * x[k]
            dwi[(2 * h + j) * d + k] += dzg * x[k]
            dwi[(3 * h + j) * d + k] += dzo * x[k]
            dx[k] += (wi[j * d + k] * dzi + wi[(h + j) * d + k] * dzf
                      + wi[(2 * h + j) * d + k] * dzg + wi[(3 * h + j) * d + k] * dzo)
        for k in range(h):
            dwh[j * h + k] += dzi * h_prev[k]
            dwh[(h + j) * h + k] += dzf * h_prev[k]
            dwh[(2 * h + j) * h + k] += dzg * h_prev[k]
            dwh[(3 * h + j) * h + k] += dzo * h_prev[k]
            dh_prev[k] += (wh[j * h + k] * dzi + wh[(h + j) * h + k] * dzf
                           + wh[(2 * h + j) * h + k] * dzg + wh[(3 * h + j) * h + k] * dzo)


def lstm_step_forward(double[::1] x, double[::1] h_prev, double[::1] c_prev,
                      double[:, ::1] w_input, double[:, ::1] w_hidden,
                      double[::1] bias):
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t h = h_prev.shape[0]
    out_h = np.empty(h)
    out_c = np.empty(h)
    gi = np.empty(h)
    gf = np.empty(h)
    gg = np.empty(h)
    go = np.empty(h)
    gtc = np.empty(h)
    cdef double[::1] vh = out_h, vc = out_c
    cdef double[::1] vi = gi, vf = gf, vg = gg, vo = go, vtc = gtc
    _step_fwd(&x[0], &h_prev[0], &c_prev[0], &w_input[0, 0], &w_hidden[0, 0],
              &bias[0], d, h, &vh[0], &vc[0], &vi[0], &vf[0], &vg[0], &vo[0], &vtc[0])
    return out_h, out_c, gi, gf, gg, go, gtc


def lstm_step_backward(double[::1] dh, double[::1] dc, double[::1] x,
                       double[::1] h_prev, double[::1] c_prev,
                       double[:, ::1] w_input, double[:, ::1] w_hidden,
                       double[::1] gi, double[::1] gf, double[::1] gg,
                       double[::1] go, double[::1] gtc,
                       double[::1] dx, double[::1] dh_prev, double[::1] dc_prev,
                       double[:, ::1] dw_input, double[:, ::1] dw_hidden,
                       double[::1] dbias):
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t h = h_prev.shape[0]
    _step_bwd(&dh[0], &dc[0], &x[0], &h_prev[0], &c_prev[0],
              &w_input[0, 0], &w_hidden[0, 0],
              &gi[0], &gf[0], &gg[0], &go[0], &gtc[0], d, h,
              &dx[0], &dh_prev[0], &dc_prev[0],
              &dw_input[0, 0], &dw_hidden[0, 0], &dbias[0])


def lstm_seq_forward(double[:, ::1] xs, double[:, ::1] w_input,
                     double[:, ::1] w_hidden, double[::1] bias):
    cdef Py_ssize_t m = xs.shape[0]
    cdef Py_ssize_t d = xs.shape[1]
    cdef Py_ssize_t h = w_hidden.shape[1]
    hs = np.empty((m, h))
    cs = np.empty((m, h))
    gi = np.empty((m, h))
    gf = np.empty((m, h))
    gg = np.empty((m, h))
    go = np.empty((m, h))
    gtc = np.empty((m, h))
    zero = np.zeros(h)
    cdef double[:, ::1] vhs = hs, vcs = cs, vgi = gi, vgf = gf, vgg = gg, vgo = go, vgtc = gtc
    cdef double[::1] vzero = zero
    cdef const double* ph
    cdef const double* pc
    cdef Py_ssize_t t
    with nogil:
        for t in range(m):
            if t == 0:
                ph = &vzero[0]
                pc = &vzero[0]
            else:
                ph = &vhs[t - 1, 0]
                pc = &vcs[t - 1, 0]
            _step_fwd(&xs[t, 0], ph, pc, &w_input[0, 0], &w_hidden[0, 0], &bias[0],
                      d, h, &vhs[t, 0], &vcs[t, 0], &vgi[t, 0], &vgf[t, 0],
                      &vgg[t, 0], &vgo[t, 0], &vgtc[t, 0])
    return hs, cs, gi, gf, gg, go, gtc


def lstm_seq_backward(double[:, ::1] dhs, double[:, ::1] xs, double[:, ::1] hs,
                      double[:, ::1] cs, double[:, ::1] gi, double[:, ::1] gf,
                      double[:, ::1] gg, double[:, ::1] go, double[:, ::1] gtc,
                      double[:, ::1] w_input, double[:, ::1] w_hidden,
                      double[:, ::1] dxs, double[:, ::1] dw_input,
                      double[:, ::1] dw_hidden, double[::1] dbias):
    cdef Py_ssize_t m = xs.shape[0]
    cdef Py_ssize_t d = xs.shape[1]
    cdef Py_ssize_t h = hs.shape[1]
    dh = np.empty(h)
    dh_carry = np.zeros(h)
    dc_carry = np.zeros(h)
    dh_next = np.empty(h)
    dc_next = np.empty(h)
    zero = np.zeros(h)
    cdef double[::1] vdh = dh, vdhc = dh_carry, vdcc = dc_carry
    cdef double[::1] vdhn = dh_next, vdcn = dc_next, vzero = zero
    cdef const double* ph
    cdef const double* pc
    cdef Py_ssize_t t, j
    with nogil:
        for t in range(m - 1, -1, -1):
            for j in range(h):
                vdh[j] = dhs[t, j] + vdhc[j]
                vdhn[j] = 0.0
                vdcn[j] = 0.0
            if t == 0:
                ph = &vzero[0]
                pc = &vzero[0]
            else:
                ph = &hs[t - 1, 0]
                pc = &cs[t - 1, 0]
            _step_bwd(&vdh[0], &vdcc[0], &xs[t, 0], ph, pc,
                      &w_input[0, 0], &w_hidden[0, 0],
                      &gi[t, 0], &gf[t, 0], &gg[t, 0], &go[t, 0], &gtc[t, 0],
                      d, h, &dxs[t, 0], &vdhn[0], &vdcn[0],
                      &dw_input[0, 0], &dw_hidden[0, 0], &dbias[0])
            for j in range(h):
                vdhc[j] = vdhn[j]
                vdcc[j] = vdcn[j]
