# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: GRU recurrence (forward/backward) and sinusoid synthesis.

Mirrors ``_kernels_py`` operation for operation. Matrix products go through
BLAS dgemm on row-major buffers.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, M_PI
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

# Re-anchor the rotating phasor this often to bound round-off drift.
cdef int _ANCHOR = 32


cdef inline void _mm_abt(int m, int n, int k, double* A, int lda, double* B, int ldb,
                         double* C, int ldc, double beta) noexcept nogil:
    # C[m,n] = A[m,k] @ B[n,k]^T + beta*C (row-major)
    cdef char ta = b'T'
    cdef char tb = b'N'
    cdef double one = 1.0
    dgemm(&ta, &tb, &n, &m, &k, &one, B, &ldb, A, &lda, &beta, C, &ldc)


cdef inline void _mm_ab(int m, int n, int k, double* A, int lda, double* B, int ldb,
                        double* C, int ldc, double beta) noexcept nogil:
    # C[m,n] = A[m,k] @ B[k,n] + beta*C
    cdef char ta = b'N'
    cdef char tb = b'N'
    cdef double one = 1.0
    dgemm(&ta, &tb, &n, &m, &k, &one, B, &ldb, A, &lda, &beta, C, &ldc)


cdef inline void _mm_atb(int m, int n, int k, double* A, int lda, double* B, int ldb,
                         double* C, int ldc, double beta) noexcept nogil:
    # C[m,n] = A[k,m]^T @ B[k,n] + beta*C
    cdef char ta = b'N'
    cdef char tb = b'T'
    cdef double one = 1.0
    dgemm(&ta, &tb, &n, &m, &k, &one, B, &ldb, A, &lda, &beta, C, &ldc)


cdef extern from "_rows.h" nogil:
    void _sigmoid_row "fl_sigmoid_row"(const double* a, double* out, int n)
    void _tanh_row "fl_tanh_row"(const double* a, double* out, int n)


def sos_channel(cos_theta, psi, double phi, int length):
    cdef double[:, ::1] ct = np.ascontiguousarray(cos_theta, dtype=np.float64)
    cdef double[:, ::1] ps = np.ascontiguousarray(psi, dtype=np.float64)
    cdef Py_ssize_t rows = ct.shape[0]
    cdef Py_ssize_t paths = ct.shape[1]
    out = np.zeros((rows, length), dtype=np.complex128)
    cdef double[:, ::1] acc = out.view(np.float64)
    cdef Py_ssize_t i, m, n, n0, n1
    cdef double w, ph, zr, zi, er, ei, tmp
    cdef double scale = 1.0 / sqrt(<double>paths)
    with nogil:
        for i in range(rows):
            for m in range(paths):
                w = 2.0 * M_PI * phi * ct[i, m]
                er = cos(w)
                ei = sin(w)
                n0 = 0
                while n0 < length:
                    n1 = n0 + _ANCHOR
                    if n1 > length:
                        n1 = length
                    ph = <double>n0 * w + ps[i, m]
                    zr = cos(ph)
                    zi = sin(ph)
                    for n in range(n0, n1):
                        acc[i, 2 * n] += zr
                        acc[i, 2 * n + 1] += zi
                        tmp = zr * er - zi * ei
                        zi = zr * ei + zi * er
                        zr = tmp
                    n0 = n1
            for n in range(2 * length):
                acc[i, n] *= scale
    return out


def gru_recur_forward(gx_in, U_in):
    cdef double[:, :, ::1] gx = np.ascontiguousarray(gx_in, dtype=np.float64)
    cdef double[:, ::1] U = np.ascontiguousarray(U_in, dtype=np.float64)
    cdef int T = gx.shape[0]
    cdef int B = gx.shape[1]
    cdef int G = gx.shape[2]
    cdef int H = G // 3
    hs_a = np.zeros((T + 1, B, H))
    z_a = np.empty((T, B, H))
    r_a = np.empty((T, B, H))
    hb_a = np.empty((T, B, H))
    act_a = np.empty((B, G))
    rh_a = np.empty((B, H))
    cdef double[:, :, ::1] hs = hs_a
    cdef double[:, :, ::1] z = z_a
    cdef double[:, :, ::1] r = r_a
    cdef double[:, :, ::1] hb = hb_a
    cdef double[:, ::1] act = act_a
    cdef double[:, ::1] rh = rh_a
    cdef int t, b
    if T == 0 or B == 0:
        return hs_a, z_a, r_a, hb_a
    cdef double* act_p = &act[0, 0]
    cdef double* rh_p = &rh[0, 0]
    cdef double* hp_p
    cdef double* hn_p
    cdef double* z_p
    cdef double* r_p
    cdef double* hb_p
    cdef Py_ssize_t n = <Py_ssize_t>B * H
    cdef Py_ssize_t k
    with nogil:
        for t in range(T):
            memcpy(act_p, &gx[t, 0, 0], B * G * sizeof(double))
            hp_p = &hs[t, 0, 0]
            hn_p = &hs[t + 1, 0, 0]
            z_p = &z[t, 0, 0]
            r_p = &r[t, 0, 0]
            hb_p = &hb[t, 0, 0]
            _mm_abt(B, 2 * H, H, hp_p, H, &U[0, 0], H, act_p, G, 1.0)
            for b in range(B):
                _sigmoid_row(&act_p[b * G], &z_p[b * H], H)
                _sigmoid_row(&act_p[b * G + H], &r_p[b * H], H)
            for k in range(n):
                rh_p[k] = r_p[k] * hp_p[k]
            _mm_abt(B, H, H, rh_p, H, &U[2 * H, 0], H, &act_p[2 * H], G, 1.0)
            for b in range(B):
                _tanh_row(&act_p[b * G + 2 * H], &hb_p[b * H], H)
            for k in range(n):
                hn_p[k] = (1.0 - z_p[k]) * hp_p[k] + z_p[k] * hb_p[k]
    return hs_a, z_a, r_a, hb_a


def gru_recur_backward(dhs_in, U_in, hs_in, z_in, r_in, hbar_in):
    cdef double[:, :, ::1] dhs = np.ascontiguousarray(dhs_in, dtype=np.float64)
    cdef double[:, ::1] U = np.ascontiguousarray(U_in, dtype=np.float64)
    cdef double[:, :, ::1] hs = np.ascontiguousarray(hs_in, dtype=np.float64)
    cdef double[:, :, ::1] z = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef double[:, :, ::1] r = np.ascontiguousarray(r_in, dtype=np.float64)
    cdef double[:, :, ::1] hb = np.ascontiguousarray(hbar_in, dtype=np.float64)
    cdef int T = dhs.shape[0]
    cdef int B = dhs.shape[1]
    cdef int H = dhs.shape[2]
    cdef int G = 3 * H
    dgx_a = np.empty((T, B, G))
    dU_a = np.zeros((G, H))
    dh_a = np.empty((B, H))
    dprev_a = np.zeros((B, H))
    rh_a = np.empty((B, H))
    drh_a = np.empty((B, H))
    cdef double[:, :, ::1] dgx = dgx_a
    cdef double[:, ::1] dU = dU_a
    cdef double[:, ::1] dh = dh_a
    cdef double[:, ::1] dprev = dprev_a
    cdef double[:, ::1] rh = rh_a
    cdef double[:, ::1] drh = drh_a
    cdef int t, b, j
    cdef double g, zt, rt, hbt, hp, dz, dr
    if T == 0 or B == 0:
        return dgx_a, dU_a
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    g = dhs[t, b, j] + dprev[b, j]
                    zt = z[t, b, j]
                    hbt = hb[t, b, j]
                    hp = hs[t, b, j]
                    dh[b, j] = g
                    dgx[t, b, 2 * H + j] = g * zt * (1.0 - hbt * hbt)
                    dgx[t, b, j] = g * (hbt - hp)   # dz, finished below
                    dprev[b, j] = g * (1.0 - zt)
                    rh[b, j] = r[t, b, j] * hp
            _mm_atb(H, H, B, &dgx[t, 0, 2 * H], G, &rh[0, 0], H, &dU[2 * H, 0], H, 1.0)
            _mm_ab(B, H, H, &dgx[t, 0, 2 * H], G, &U[2 * H, 0], H, &drh[0, 0], H, 0.0)
            for b in range(B):
                for j in range(H):
                    hp = hs[t, b, j]
                    rt = r[t, b, j]
                    zt = z[t, b, j]
                    dr = drh[b, j] * hp
                    dprev[b, j] += drh[b, j] * rt
                    dz = dgx[t, b, j]
                    dgx[t, b, j] = dz * zt * (1.0 - zt)
                    dgx[t, b, H + j] = dr * rt * (1.0 - rt)
            _mm_atb(2 * H, H, B, &dgx[t, 0, 0], G, &hs[t, 0, 0], H, &dU[0, 0], H, 1.0)
            _mm_ab(B, H, 2 * H, &dgx[t, 0, 0], G, &U[0, 0], H, &dprev[0, 0], H, 1.0)
    return dgx_a, dU_a
