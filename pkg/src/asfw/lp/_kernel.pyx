# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simplex iteration loop. Keep in lockstep with _kernel_py.py."""

from libc.math cimport INFINITY, fabs, isfinite

import numpy as np

cdef int OPTIMAL = 0
cdef int UNBOUNDED = 1
cdef int PIVOT_LIMIT = 2


def iterate(double[:, ::1] T, double[::1] d, double[::1] x, long[::1] basis,
            long[::1] where, double[::1] lo, double[::1] hi,
            double opt_tol, double pivot_tol, long max_pivots, long bland_after,
            bint bland):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t N = T.shape[1]
    cdef Py_ssize_t i, j, k, q, r
    cdef long pivots = 0, degen = 0
    cdef double best, score, dj, direction, a, lim, thmin, flip, theta, tie
    cdef double piv, f, bestabs
    cdef long b, leave
    cdef Py_ssize_t jj, nnz
    cdef double* Ti
    cdef double* Tr
    # nonzero columns of the pivot row; the elimination only touches these
    cdef Py_ssize_t[::1] cols = np.empty(N, dtype=np.intp)
    while True:
        if pivots >= max_pivots:
            return PIVOT_LIMIT, pivots, bland
        # pricing
        q = -1
        best = 0.0
        for j in range(N):
            if where[j] >= 0 or not lo[j] < hi[j]:
                continue
            dj = d[j]
            score = 0.0
            if where[j] == -1 and dj < -opt_tol:
                score = -dj
            elif where[j] == -2 and dj > opt_tol:
                score = dj
            if score > 0.0:
                if bland:
                    q = j
                    break
                if score > best:
                    best = score
                    q = j
        if q < 0:
            return OPTIMAL, pivots, bland
        direction = 1.0 if where[q] == -1 else -1.0

        # ratio test, pass 1: smallest ratio
        thmin = INFINITY
        for i in range(m):
            a = T[i, q] * direction
            b = basis[i]
            if a > pivot_tol:
                lim = (x[b] - lo[b]) / a
            elif a < -pivot_tol and isfinite(hi[b]):
                lim = (hi[b] - x[b]) / (-a)
            else:
                continue
            if lim < 0.0:
                lim = 0.0
            if lim < thmin:
                thmin = lim
        flip = hi[q] - lo[q]
        r = -1
        if flip <= thmin:
            if not isfinite(flip):
                return UNBOUNDED, pivots, bland
            theta = flip
        else:
            theta = thmin
            tie = 1e-12 * (1.0 + thmin)
            bestabs = -1.0
            # pass 2: tie break among near-minimal rows
            for i in range(m):
                a = T[i, q] * direction
                b = basis[i]
                if a > pivot_tol:
                    lim = (x[b] - lo[b]) / a
                elif a < -pivot_tol and isfinite(hi[b]):
                    lim = (hi[b] - x[b]) / (-a)
                else:
                    continue
                if lim < 0.0:
                    lim = 0.0
                if lim <= thmin + tie:
                    if bland:
                        if r < 0 or b < basis[r]:
                            r = i
                    elif fabs(a) > bestabs:
                        bestabs = fabs(a)
                        r = i

        for i in range(m):
            a = T[i, q] * direction
            x[basis[i]] -= a * theta
        if r < 0:
            if where[q] == -1:
                x[q] = hi[q]
                where[q] = -2
            else:
                x[q] = lo[q]
                where[q] = -1
        else:
            x[q] += direction * theta
            leave = basis[r]
            if T[r, q] * direction > 0.0:
                x[leave] = lo[leave]
                where[leave] = -1
            else:
                x[leave] = hi[leave]
                where[leave] = -2
            piv = T[r, q]
            Tr = &T[r, 0]
            nnz = 0
            for k in range(N):
                Tr[k] = Tr[k] / piv
                if Tr[k] != 0.0:
                    cols[nnz] = k
                    nnz += 1
            for i in range(m):
                if i == r:
                    continue
                f = T[i, q]
                if f == 0.0:
                    continue
                Ti = &T[i, 0]
                for jj in range(nnz):
                    k = cols[jj]
                    Ti[k] -= f * Tr[k]
            f = d[q]
            for jj in range(nnz):
                k = cols[jj]
                d[k] -= f * Tr[k]
            basis[r] = q
            where[q] = r
        pivots += 1
        if theta <= 1e-12:
            degen += 1
            if degen >= bland_after:
                bland = True
        else:
            degen = 0
