# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled group kernel; bit-identical to the numpy fallback.

Per-element operation order matches autolut._kernels._py exactly: patch terms
accumulate in (i, j) order from zero, residual blend is (1-w)*a + w*b, the
five lookup vertices sum left-associated, branches accumulate in index order
and the mean divides once at the end. Built with -ffp-contract=off so no FMA
contraction perturbs the sequence.
"""

import numpy as np


def group_forward(
    const double[:, ::1] x_prev_pad,
    const double[:, ::1] x_prev2_pad,
    const double[:, :, :, ::1] w_curr,
    const double[:, :, :, ::1] w_prev,
    const double[:, ::1] w_res,
    const unsigned char[:, :, ::1] luts,
    int k,
):
    cdef Py_ssize_t h = x_prev_pad.shape[0] - (k - 1)
    cdef Py_ssize_t w = x_prev_pad.shape[1] - (k - 1)
    cdef Py_ssize_t branches = luts.shape[0]
    cdef Py_ssize_t channels = luts.shape[2]
    if x_prev2_pad.shape[0] != x_prev_pad.shape[0] or x_prev2_pad.shape[1] != x_prev_pad.shape[1]:
        raise ValueError("padded planes must share dims")

    out_arr = np.zeros((h, w, channels))
    cdef double[:, :, ::1] out = out_arr

    cdef Py_ssize_t br, y, x, i, j, c, d, pos
    cdef double s_curr, s_prev, frac, acc, wr
    cdef double qc[4]
    cdef double qp[4]
    cdef double r[4]
    cdef double f[4]
    cdef double fs[4]
    cdef double w5[5]
    cdef long cells[4]
    cdef long order[4]
    cdef long flat[5]
    cdef long cell, key
    cdef double keyf
    cdef long strides[4]
    strides[0] = 4913
    strides[1] = 289
    strides[2] = 17
    strides[3] = 1

    with nogil:
        for br in range(branches):
            for y in range(h):
                for x in range(w):
                    for c in range(4):
                        s_curr = 0.0
                        s_prev = 0.0
                        for i in range(k):
                            for j in range(k):
                                s_curr += x_prev_pad[y + i, x + j] * w_curr[br, i, j, c]
                                s_prev += x_prev2_pad[y + i, x + j] * w_prev[br, i, j, c]
                        qc[c] = s_curr
                        qp[c] = s_prev
                    for c in range(4):
                        wr = w_res[br, c]
                        r[c] = (1.0 - wr) * qc[c] + wr * qp[c]
                    for d in range(4):
                        cell = <long>(r[d] * 0.0625)
                        if cell > 15:
                            cell = 15
                        cells[d] = cell
                        f[d] = (r[d] - 16.0 * cell) * 0.0625
                        order[d] = d
                    # stable insertion sort, descending fraction
                    for d in range(1, 4):
                        key = order[d]
                        keyf = f[key]
                        pos = d
                        while pos > 0 and f[order[pos - 1]] < keyf:
                            order[pos] = order[pos - 1]
                            pos -= 1
                        order[pos] = key
                    for d in range(4):
                        fs[d] = f[order[d]]
                    w5[0] = 1.0 - fs[0]
                    w5[1] = fs[0] - fs[1]
                    w5[2] = fs[1] - fs[2]
                    w5[3] = fs[2] - fs[3]
                    w5[4] = fs[3]
                    flat[0] = ((cells[0] * 17 + cells[1]) * 17 + cells[2]) * 17 + cells[3]
                    for d in range(4):
                        flat[d + 1] = flat[d] + strides[order[d]]
                    for c in range(channels):
                        acc = w5[0] * <double>luts[br, flat[0], c]
                        acc = acc + w5[1] * <double>luts[br, flat[1], c]
                        acc = acc + w5[2] * <double>luts[br, flat[2], c]
                        acc = acc + w5[3] * <double>luts[br, flat[3], c]
                        acc = acc + w5[4] * <double>luts[br, flat[4], c]
                        out[y, x, c] += acc
        for y in range(h):
            for x in range(w):
                for c in range(channels):
                    out[y, x, c] = out[y, x, c] / branches
    return out_arr
