# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch OMP (progressive Cholesky), one column at a time, GIL released."""

from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    # Four accumulators; the summation order is fixed so results are reproducible.
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t i = 0
    while i + 4 <= n:
        s0 += a[i] * b[i]
        s1 += a[i + 1] * b[i + 1]
        s2 += a[i + 2] * b[i + 2]
        s3 += a[i + 3] * b[i + 3]
        i += 4
    while i < n:
        s0 += a[i] * b[i]
        i += 1
    return (s0 + s1) + (s2 + s3)


cdef inline double _mdot(const double* a, const double* b, const double* w,
                         Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += a[i] * b[i] * w[i]
    return s


cdef int _encode(const double* Dt, const double* G, const double* y, const double* mk,
                 Py_ssize_t n, Py_ssize_t m, int T, double eps2, double min_corr,
                 double min_energy, int* sel, double* x, double* r, double* ym, double* alpha,
                 double* norms, double* L, double* z, char* used) noexcept nogil:
    """Encode one signal; returns the support size.  ``mk`` is NULL when unmasked."""
    cdef Py_ssize_t i, j, p, q, best
    cdef int k = 0
    cdef double rn2, c, bv, d, acc, gij, floor2 = 0.0
    cdef const double* atom

    for j in range(m):
        used[j] = 0
    if mk != NULL:
        for i in range(n):
            ym[i] = y[i] * mk[i]
        acc = 0.0
        for i in range(n):
            acc += mk[i]
        floor2 = min_energy * acc / n
        if floor2 < 1e-20:
            floor2 = 1e-20
        for j in range(m):
            norms[j] = sqrt(_mdot(Dt + j * n, Dt + j * n, mk, n))
    else:
        for i in range(n):
            ym[i] = y[i]
    for i in range(n):
        r[i] = ym[i]
    rn2 = _dot(r, r, n)
    for j in range(m):
        alpha[j] = _dot(Dt + j * n, ym, n)

    while k < T and rn2 > eps2:
        best = -1
        bv = min_corr
        for j in range(m):
            if used[j]:
                continue
            if k == 0:
                c = fabs(alpha[j])
            else:
                c = fabs(_dot(Dt + j * n, r, n))
            if mk != NULL:
                if norms[j] * norms[j] < floor2:
                    continue
                c = c / norms[j]
            if c > bv:
                bv = c
                best = j
        if best < 0:
            break

        # Grow the Cholesky factor of the Gram matrix of the selected atoms.
        if mk != NULL:
            gij = norms[best] * norms[best]
        else:
            gij = G[best * m + best]
        for p in range(k):
            if mk != NULL:
                acc = _mdot(Dt + sel[p] * n, Dt + best * n, mk, n)
            else:
                acc = G[sel[p] * m + best]
            for q in range(p):
                acc -= L[p * T + q] * z[q]
            z[p] = acc / L[p * T + p]
        d = gij
        for p in range(k):
            d -= z[p] * z[p]
        if d <= 1e-10 * gij:
            break
        for p in range(k):
            L[k * T + p] = z[p]
        L[k * T + k] = sqrt(d)
        sel[k] = <int>best
        used[best] = 1
        k += 1

        # Solve L L^T x = alpha[sel].
        for p in range(k):
            acc = alpha[sel[p]]
            for q in range(p):
                acc -= L[p * T + q] * z[q]
            z[p] = acc / L[p * T + p]
        for p in range(k - 1, -1, -1):
            acc = z[p]
            for q in range(p + 1, k):
                acc -= L[q * T + p] * x[q]
            x[p] = acc / L[p * T + p]

        for i in range(n):
            r[i] = ym[i]
        for p in range(k):
            atom = Dt + sel[p] * n
            acc = x[p]
            if mk != NULL:
                for i in range(n):
                    r[i] -= acc * atom[i] * mk[i]
            else:
                for i in range(n):
                    r[i] -= acc * atom[i]
        rn2 = _dot(r, r, n)
    return k


def omp_batch(const double[:, ::1] Dt, const double[:, ::1] G, const double[:, ::1] Yt,
              const double[:, ::1] masks, int T, double eps2, int min_known,
              double min_corr, double min_energy, int[:, ::1] idx_out, double[:, ::1] coef_out,
              unsigned char[::1] skipped, Py_ssize_t start, Py_ssize_t stop):
    """Encode rows ``start:stop`` of ``Yt`` into ``idx_out``/``coef_out``.

    ``Dt`` holds atoms as rows (m x n); ``masks`` is either empty (0 x n) or
    matches ``Yt``.  Fully-known rows use the unmasked path.
    """
    cdef Py_ssize_t m = Dt.shape[0]
    cdef Py_ssize_t n = Dt.shape[1]
    cdef bint use_mask = masks.shape[0] > 0
    cdef Py_ssize_t col, i
    cdef int k, p, cap, known
    cdef const double* mk
    cdef int* sel = <int*>malloc(T * sizeof(int))
    cdef double* x = <double*>malloc(T * sizeof(double))
    cdef double* r = <double*>malloc(n * sizeof(double))
    cdef double* ym = <double*>malloc(n * sizeof(double))
    cdef double* alpha = <double*>malloc(m * sizeof(double))
    cdef double* norms = <double*>malloc(m * sizeof(double))
    cdef double* L = <double*>malloc(T * T * sizeof(double))
    cdef double* z = <double*>malloc(T * sizeof(double))
    cdef char* used = <char*>malloc(m * sizeof(char))
    if (used == NULL or sel == NULL or x == NULL or r == NULL or ym == NULL or alpha == NULL
            or norms == NULL or L == NULL or z == NULL):
        free(sel); free(x); free(r); free(ym); free(alpha); free(norms); free(L); free(z); free(used)
        raise MemoryError()
    try:
        with nogil:
            for col in range(start, stop):
                mk = NULL
                cap = T
                if use_mask:
                    known = 0
                    for i in range(n):
                        if masks[col, i] != 0.0:
                            known += 1
                    if known < min_known:
                        skipped[col] = 1
                        continue
                    if known < n:
                        mk = &masks[col, 0]
                        if known < cap:
                            cap = known
                k = _encode(&Dt[0, 0], &G[0, 0], &Yt[col, 0], mk, n, m, cap, eps2,
                            min_corr, min_energy, sel, x, r, ym, alpha, norms, L, z, used)
                for p in range(k):
                    idx_out[col, p] = sel[p]
                    coef_out[col, p] = x[p]
    finally:
        free(sel); free(x); free(r); free(ym); free(alpha); free(norms); free(L); free(z); free(used)
