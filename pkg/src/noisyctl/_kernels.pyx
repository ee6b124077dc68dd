# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; see ``_kernels_py`` for the reference implementation.

Complex products are written out in real arithmetic: C99 complex multiplication
goes through a NaN-checking library call that dominates these small loops.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()


def phase_variance_grad(const double[::1] r, const double[::1] phi,
                        const double complex[:, ::1] xe,
                        const double complex[:, ::1] x2e):
    cdef Py_ssize_t d = r.shape[0]
    cdef Py_ssize_t p, q
    cdef double[::1] cr = np.empty(d)
    cdef double[::1] ci = np.empty(d)
    cdef double[::1] ar = np.empty(d)
    cdef double[::1] ai = np.empty(d)
    cdef double[::1] br = np.empty(d)
    cdef double[::1] bi = np.empty(d)
    cdef double[::1] grad
    cdef double sar, sai, sbr, sbi, xr, xi, yr, yi
    cdef double m1 = 0.0, m2 = 0.0
    out = np.empty(d, dtype=np.float64)
    grad = out

    for p in range(d):
        cr[p] = r[p] * cos(phi[p])
        ci[p] = r[p] * sin(phi[p])
    for p in range(d):
        sar = 0.0
        sai = 0.0
        sbr = 0.0
        sbi = 0.0
        for q in range(d):
            xr = xe[p, q].real
            xi = xe[p, q].imag
            yr = x2e[p, q].real
            yi = x2e[p, q].imag
            sar += xr * cr[q] - xi * ci[q]
            sai += xr * ci[q] + xi * cr[q]
            sbr += yr * cr[q] - yi * ci[q]
            sbi += yr * ci[q] + yi * cr[q]
        ar[p] = sar
        ai[p] = sai
        br[p] = sbr
        bi[p] = sbi
        # Re(conj(c_p) s) = cr sr + ci si
        m1 += cr[p] * sar + ci[p] * sai
        m2 += cr[p] * sbr + ci[p] * sbi
    for p in range(d):
        # Im(conj(c_p) s) = cr si - ci sr
        grad[p] = (2.0 * (cr[p] * bi[p] - ci[p] * br[p])
                   - 4.0 * m1 * (cr[p] * ai[p] - ci[p] * ar[p]))
    return m2 - m1 * m1, out


def apply_kicks(double complex[:, ::1] psi, const double complex[:, :, ::1] vecs,
                const double[:, ::1] lams, const double[:, ::1] dw):
    cdef Py_ssize_t n_traj = psi.shape[0]
    cdef Py_ssize_t d = psi.shape[1]
    cdef Py_ssize_t n_ctrl = vecs.shape[0]
    cdef Py_ssize_t m, k, a, b
    cdef double sr, si, vr, vi, pr, pi_, x, co, sn
    cdef double[::1] cr = np.empty(d)
    cdef double[::1] ci = np.empty(d)

    for m in range(n_traj):
        for k in range(n_ctrl):
            if dw[m, k] == 0.0:
                continue
            # c = V^dag psi, accumulated row by row for contiguous access
            for a in range(d):
                cr[a] = 0.0
                ci[a] = 0.0
            for b in range(d):
                pr = psi[m, b].real
                pi_ = psi[m, b].imag
                for a in range(d):
                    vr = vecs[k, b, a].real
                    vi = vecs[k, b, a].imag
                    cr[a] += vr * pr + vi * pi_
                    ci[a] += vr * pi_ - vi * pr
            for a in range(d):
                x = dw[m, k] * lams[k, a]
                co = cos(x)
                sn = sin(x)
                sr = cr[a] * co + ci[a] * sn
                si = ci[a] * co - cr[a] * sn
                cr[a] = sr
                ci[a] = si
            for b in range(d):
                sr = 0.0
                si = 0.0
                for a in range(d):
                    vr = vecs[k, b, a].real
                    vi = vecs[k, b, a].imag
                    sr += vr * cr[a] - vi * ci[a]
                    si += vr * ci[a] + vi * cr[a]
                psi[m, b] = sr + 1j * si
