# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid kernels; see _kernels_py for the reference semantics."""

import numpy as np

cimport numpy as cnp
from libc.math cimport log

BACKEND = "cython"

ctypedef double complex cplx


cdef inline double cmag(cplx z) noexcept nogil:
    return abs(z)


def green_grid(xs, ys, coeffs, offsets, bs, double R, long n_max,
               double tol=1e-13, long tail_max=64):
    """Escape rate G+ for a batch of points; mirrors _kernels_py.green_grid."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] xa = \
        np.ascontiguousarray(xs, dtype=np.complex128).ravel().copy()
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] ya = \
        np.ascontiguousarray(ys, dtype=np.complex128).ravel().copy()
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] ca = \
        np.ascontiguousarray(coeffs, dtype=np.complex128)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] oa = \
        np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] ba = \
        np.ascontiguousarray(bs, dtype=np.complex128)

    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t n_fac = ba.shape[0]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.zeros(n)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] entry = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] conv = np.zeros(n, dtype=np.uint8)

    cdef cplx[::1] xv = xa
    cdef cplx[::1] yv = ya
    cdef cplx[::1] cv = ca
    cdef long long[::1] ov = oa
    cdef cplx[::1] bv = ba
    cdef double[::1] gv = g
    cdef int[::1] ev = entry
    cdef unsigned char[::1] qv = conv

    cdef long d_total = 1
    cdef Py_ssize_t j, i, t, k, idx
    for j in range(n_fac):
        d_total *= <long> (ov[j + 1] - ov[j] - 1)
    cdef double tail_factor = d_total / (d_total - 1.0)

    cdef cplx x, y, s, v, eps, acc, vpow, b
    cdef double r, gval, gn, w
    cdef long dj, kk, small
    cdef bint entered, done

    with nogil:
        for i in range(n):
            x = xv[i]
            y = yv[i]
            entered = False
            for k in range(n_max + 1):
                if cmag(y) >= R and cmag(y) >= cmag(x):
                    entered = True
                    ev[i] = <int> k
                    break
                if k == n_max:
                    break
                for j in range(n_fac):
                    acc = 0
                    for idx in range(ov[j + 1] - 1, ov[j] - 1, -1):
                        acc = acc * y + cv[idx]
                    acc = acc - bv[j] * x
                    x = y
                    y = acc
            if not entered:
                continue
            # renormalized tail (see _kernels_py)
            s = x / y
            v = 1.0 / y
            r = log(cmag(y))
            gval = r
            w = 1.0
            done = False
            small = 0
            for t in range(tail_max):
                for j in range(n_fac):
                    dj = <long> (ov[j + 1] - ov[j] - 1)
                    b = bv[j]
                    # P(y)/y^d in the variable v = 1/y: forward Horner
                    eps = 0
                    for idx in range(ov[j], ov[j + 1]):
                        eps = eps * v + cv[idx]
                    vpow = 1
                    for kk in range(dj - 1):
                        vpow = vpow * v
                    eps = eps - b * s * vpow
                    r = dj * r + log(cmag(eps))
                    s = vpow / eps
                    v = (vpow * v) / eps
                w = w / d_total
                gn = r * w
                # require two consecutive small refinements before freezing
                if (gn - gval if gn > gval else gval - gn) * tail_factor < tol:
                    small += 1
                else:
                    small = 0
                gval = gn
                if small >= 2:
                    done = True
                    break
            if done:
                qv[i] = 1
            gval = gval * d_total ** (-<double> ev[i])
            gv[i] = gval if gval > 0.0 else 0.0

    return g, entry, np.asarray(conv, dtype=bool)
