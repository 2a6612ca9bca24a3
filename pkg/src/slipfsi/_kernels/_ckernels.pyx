# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``; same signatures."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport floor

cnp.import_array()


def bilinear_polar(values, fr, ft, int n_r, int n_theta):
    cdef cnp.ndarray[double, ndim=3] V
    lead = values.shape[:-2]
    V = np.ascontiguousarray(values, dtype=np.float64).reshape(-1, n_r, n_theta)
    fr_a = np.asarray(fr, dtype=np.float64)
    ft_a = np.asarray(ft, dtype=np.float64)
    fr_a, ft_a = np.broadcast_arrays(fr_a, ft_a)
    pshape = fr_a.shape
    cdef double[::1] R = np.ascontiguousarray(fr_a).ravel()
    cdef double[::1] T = np.ascontiguousarray(ft_a).ravel()
    cdef Py_ssize_t npts = R.shape[0], ncomp = V.shape[0]
    out = np.empty((ncomp, npts), dtype=np.float64)
    cdef double[:, ::1] O = out
    cdef double[:, :, ::1] Vv = V
    cdef Py_ssize_t p, m
    cdef long i0, j0, j1
    cdef double wr, wt, jf
    for p in range(npts):
        i0 = <long>floor(R[p])
        if i0 < 0:
            i0 = 0
        elif i0 > n_r - 2:
            i0 = n_r - 2
        wr = R[p] - i0
        jf = floor(T[p])
        wt = T[p] - jf
        j0 = (<long>jf) % n_theta
        if j0 < 0:
            j0 += n_theta
        j1 = (j0 + 1) % n_theta
        for m in range(ncomp):
            O[m, p] = ((1 - wr) * ((1 - wt) * Vv[m, i0, j0] + wt * Vv[m, i0, j1])
                       + wr * ((1 - wt) * Vv[m, i0 + 1, j0] + wt * Vv[m, i0 + 1, j1]))
    return out.reshape(lead + pshape)


def transformed_rhs(Up, double hr, double d1den, double d2den, inv_r, cos, sin,
                    gup, dg, Bc, Cc, Gam, Yd, Em, double mu, int num_threads=1):
    cdef double[:, :, ::1] P = np.ascontiguousarray(Up, dtype=np.float64)
    cdef double[::1] ir = np.ascontiguousarray(inv_r, dtype=np.float64)
    cdef double[::1] cs = np.ascontiguousarray(cos, dtype=np.float64)
    cdef double[::1] sn = np.ascontiguousarray(sin, dtype=np.float64)
    cdef double[:, :, :, ::1] g = np.ascontiguousarray(gup, dtype=np.float64)
    cdef double[:, :, ::1] dgv = np.ascontiguousarray(dg, dtype=np.float64)
    cdef double[:, :, :, :, ::1] B = np.ascontiguousarray(Bc, dtype=np.float64)
    cdef double[:, :, :, ::1] C = np.ascontiguousarray(Cc, dtype=np.float64)
    cdef double[:, :, :, :, ::1] Gm = np.ascontiguousarray(Gam, dtype=np.float64)
    cdef double[:, :, ::1] Y = np.ascontiguousarray(Yd, dtype=np.float64)
    cdef double[:, :, :, ::1] E = np.ascontiguousarray(Em, dtype=np.float64)
    cdef Py_ssize_t nr = P.shape[1] - 2, nt = P.shape[2]
    out = np.empty((2, nr, nt), dtype=np.float64)
    cdef double[:, :, ::1] O = out
    cdef Py_ssize_t x, y, yp, ym, i, j, k, l
    cdef double c, s, rr, fr, frr, ft, ftt, frt, a, b, d, ftr
    cdef double Gr[2][2]
    cdef double H[2][3]
    cdef double u[2]
    cdef double lap, conv, mov
    for x in prange(nr, nogil=True, num_threads=num_threads, schedule="static"):
        for y in range(nt):
            yp = y + 1
            if yp == nt:
                yp = 0
            ym = y - 1
            if ym < 0:
                ym = nt - 1
            c = cs[y]
            s = sn[y]
            rr = ir[x]
            for i in range(2):
                u[i] = P[i, x + 1, y]
                fr = (P[i, x + 2, y] - P[i, x, y]) / (2 * hr)
                frr = (P[i, x + 2, y] - 2 * u[i] + P[i, x, y]) / (hr * hr)
                ft = (P[i, x + 1, yp] - P[i, x + 1, ym]) / d1den
                ftt = (P[i, x + 1, yp] - 2 * u[i] + P[i, x + 1, ym]) / d2den
                frt = ((P[i, x + 2, yp] - P[i, x, yp]) - (P[i, x + 2, ym] - P[i, x, ym])) / (2 * hr * d1den)
                ftr = ft * rr
                Gr[i][0] = c * fr - s * ftr
                Gr[i][1] = s * fr + c * ftr
                a = frr
                b = frt * rr - ft * rr * rr
                d = fr * rr + ftt * rr * rr
                H[i][0] = c * c * a - 2 * c * s * b + s * s * d
                H[i][1] = c * s * (a - d) + (c * c - s * s) * b
                H[i][2] = s * s * a + 2 * c * s * b + c * c * d
            for i in range(2):
                lap = g[0, 0, x, y] * H[i][0] + 2 * g[0, 1, x, y] * H[i][1] + g[1, 1, x, y] * H[i][2]
                lap = lap + dgv[0, x, y] * Gr[i][0] + dgv[1, x, y] * Gr[i][1]
                conv = 0.0
                mov = 0.0
                for j in range(2):
                    lap = lap + C[i, j, x, y] * u[j]
                    conv = conv + u[j] * Gr[i][j]
                    mov = mov + Y[j, x, y] * Gr[i][j] + E[i, j, x, y] * u[j]
                    for l in range(2):
                        lap = lap + B[i, j, l, x, y] * Gr[j][l]
                    for k in range(2):
                        conv = conv + Gm[i, j, k, x, y] * u[j] * u[k]
                O[i, x, y] = mu * lap - conv - mov
    return out
