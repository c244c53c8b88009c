# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: the LARS-lasso homotopy and block-match scoring.

Semantics mirror ``pyfallback`` exactly; see that module for the readable
reference.  The homotopy keeps the active-set Cholesky factor updated in
place (append rows, Givens downdates, full rebuild when the cheap
condition estimate degrades) and leans on BLAS for the dense products.
The main loop runs without the GIL so solves parallelize across threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, hypot, sqrt
from scipy.linalg.cython_blas cimport daxpy, dgemv

cnp.import_array()

DEF _STATUS_OK = 0
DEF _STATUS_MAX_STEPS = 1

STATUS_OK = _STATUS_OK
STATUS_MAX_STEPS = _STATUS_MAX_STEPS

DEF TINY = 1e-14


cdef inline void _lower_solve(double* L, int lda, double* b, int n) noexcept nogil:
    cdef int i, j
    cdef double acc
    for i in range(n):
        acc = b[i]
        for j in range(i):
            acc -= L[i * lda + j] * b[j]
        b[i] = acc / L[i * lda + i]


cdef inline void _upper_solve(double* L, int lda, double* b, int n) noexcept nogil:
    cdef int i, j
    cdef double acc
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, n):
            acc -= L[j * lda + i] * b[j]
        b[i] = acc / L[i * lda + i]


cdef int _chol_append(double* L, int lda, int nA, double* grow, double gjj) noexcept nogil:
    """Extend the factor by one row; grow holds G[j, active] on entry."""
    cdef int i, j
    cdef double acc, d2, floor_
    for i in range(nA):
        acc = grow[i]
        for j in range(i):
            acc -= L[i * lda + j] * grow[j]
        grow[i] = acc / L[i * lda + i]
    d2 = gjj
    for i in range(nA):
        d2 -= grow[i] * grow[i]
    floor_ = 1e-12 * gjj
    if floor_ < 1e-300:
        floor_ = 1e-300
    if d2 <= floor_:
        return -1
    for i in range(nA):
        L[nA * lda + i] = grow[i]
    L[nA * lda + nA] = sqrt(d2)
    return 0


cdef void _chol_drop(double* L, int lda, int nA, int pos) noexcept nogil:
    cdef int k, r
    cdef double a, b, rr, c, s, lo, hi
    for r in range(pos, nA - 1):
        for k in range(nA):
            L[r * lda + k] = L[(r + 1) * lda + k]
    for k in range(pos, nA - 1):
        a = L[k * lda + k]
        b = L[k * lda + k + 1]
        rr = hypot(a, b)
        if rr == 0.0:
            continue
        c = a / rr
        s = b / rr
        for r in range(k, nA - 1):
            lo = L[r * lda + k]
            hi = L[r * lda + k + 1]
            L[r * lda + k] = c * lo + s * hi
            L[r * lda + k + 1] = -s * lo + c * hi
        if L[k * lda + k] < 0:
            for r in range(k, nA - 1):
                L[r * lda + k] = -L[r * lda + k]
    for r in range(nA - 1):
        L[r * lda + nA - 1] = 0.0
    for k in range(nA):
        L[(nA - 1) * lda + k] = 0.0


cdef int _rebuild_chol(double* L, int lda, double* gcols, int* active, int nA,
                       double ridge) noexcept nogil:
    cdef int i, j, t
    cdef double acc
    for i in range(nA):
        for j in range(i + 1):
            acc = gcols[active[i] * lda + j]
            if j == i:
                acc += ridge
            for t in range(j):
                acc -= L[i * lda + t] * L[j * lda + t]
            if j == i:
                if acc <= 0.0:
                    return -1
                L[i * lda + i] = sqrt(acc)
            else:
                L[i * lda + j] = acc / L[j * lda + j]
        for j in range(i + 1, nA):
            L[i * lda + j] = 0.0
    return 0


cdef int _activate(double* D, double* gcols, double* L, int* active,
                   unsigned char* state, double* sgn, double* alpha, double* c,
                   double* grow, int* nA, int j, int q, int K,
                   int maxA) noexcept nogil:
    """Bring atom j into the active set (Gram column + Cholesky row)."""
    cdef int n = nA[0]
    cdef int i
    cdef int one = 1
    cdef double d_one = 1.0, d_zero = 0.0
    if n >= maxA:
        state[j] = 2
        return -1
    # Gram column of atom j: C-order (q, K) D is Fortran (K, q)
    dgemv("N", &K, &q, &d_one, D, &K, D + j, &K, &d_zero, gcols + n, &maxA)
    for i in range(n):
        grow[i] = gcols[active[i] * maxA + n]
    if _chol_append(L, maxA, n, grow, gcols[j * maxA + n]) < 0:
        state[j] = 2
        for i in range(K):
            gcols[i * maxA + n] = 0.0
        return -1
    sgn[n] = 1.0 if c[j] > 0 else -1.0
    alpha[n] = 0.0
    active[n] = j
    state[j] = 1
    nA[0] = n + 1
    return 0


def lasso_homotopy(const double[:, ::1] D, const double[::1] s, double eta, int max_steps,
                   bint want_path=False):
    """LARS-lasso homotopy; same contract as ``pyfallback.lasso_homotopy``."""
    cdef int q = D.shape[0]
    cdef int K = D.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] coef_arr = np.zeros(K)
    if K == 0:
        return coef_arr, _STATUS_OK, 0, (np.zeros(1) if want_path else None)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] c_arr = np.empty(K)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] path_arr = np.empty(
        max_steps + 2 if want_path else 1)
    cdef int maxA = q if q < K else K
    cdef cnp.ndarray[cnp.float64_t, ndim=2] L_arr = np.zeros((maxA, maxA))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gcols_arr = np.zeros((K, maxA))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work_arr = np.zeros(4 * maxA + K)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] active_arr = np.zeros(maxA, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] state_arr = np.zeros(K, dtype=np.uint8)

    cdef double[::1] c_mv = c_arr
    cdef double[::1] path_mv = path_arr
    cdef double[:, ::1] L_mv = L_arr
    cdef double[:, ::1] g_mv = gcols_arr
    cdef double[::1] work_mv = work_arr
    cdef int[::1] active_mv = active_arr
    cdef cnp.uint8_t[::1] state_mv = state_arr
    cdef double[::1] coef_mv = coef_arr

    cdef double* Dp = <double*>&D[0, 0]
    cdef double* sp = <double*>&s[0]
    cdef double* cp = &c_mv[0]
    cdef double* path = &path_mv[0]
    cdef double* Lp = &L_mv[0, 0]
    cdef double* gp = &g_mv[0, 0]
    cdef double* w = &work_mv[0]
    cdef double* alpha = &work_mv[maxA]
    cdef double* sgn = &work_mv[2 * maxA]
    cdef double* grow = &work_mv[3 * maxA]
    cdef double* adir = &work_mv[4 * maxA]
    cdef int* act = &active_mv[0]
    cdef unsigned char* st = &state_mv[0]
    cdef double* coefp = &coef_mv[0]

    cdef int one = 1
    cdef double d_one = 1.0, d_zero = 0.0, neg_gamma
    cdef int nA = 0, n_steps = 0, status = _STATUS_OK, n_path = 0
    cdef int i, k, event, event_idx, kd, drop_j, j0
    cdef double lam, gamma, gamma_stop, g1, g2, den, dgmax, dgmin, aj, cj

    with nogil:
        dgemv("N", &K, &q, &d_one, Dp, &K, sp, &one, &d_zero, cp, &one)
        lam = 0.0
        j0 = 0
        for k in range(K):
            if fabs(cp[k]) > lam:
                lam = fabs(cp[k])
                j0 = k
        if want_path:
            path[n_path] = lam
            n_path += 1

        if lam > eta and _activate(Dp, gp, Lp, act, st, sgn, alpha, cp, grow,
                                   &nA, j0, q, K, maxA) == 0:
            while True:
                n_steps += 1
                if n_steps > max_steps:
                    status = _STATUS_MAX_STEPS
                    break

                dgmax = 0.0
                dgmin = INFINITY
                for i in range(nA):
                    if Lp[i * maxA + i] > dgmax:
                        dgmax = Lp[i * maxA + i]
                    if Lp[i * maxA + i] < dgmin:
                        dgmin = Lp[i * maxA + i]
                if (dgmax / dgmin) * (dgmax / dgmin) > 1e8:
                    if _rebuild_chol(Lp, maxA, gp, act, nA, 0.0) < 0:
                        _rebuild_chol(Lp, maxA, gp, act, nA, 1e-12 * dgmax * dgmax)

                for i in range(nA):
                    w[i] = sgn[i]
                _lower_solve(Lp, maxA, w, nA)
                _upper_solve(Lp, maxA, w, nA)

                dgemv("T", &maxA, &K, &d_one, gp, &maxA, w, &one, &d_zero,
                      adir, &one)

                gamma_stop = lam - eta
                gamma = gamma_stop
                event = -1
                event_idx = -1

                for k in range(K):
                    if st[k] != 0:
                        continue
                    cj = cp[k]
                    aj = adir[k]
                    den = 1.0 - aj
                    if den > TINY:
                        g1 = (lam - cj) / den
                        if g1 > TINY and g1 < gamma:
                            gamma = g1
                            event = 0
                            event_idx = k
                    den = 1.0 + aj
                    if den > TINY:
                        g2 = (lam + cj) / den
                        if g2 > TINY and g2 < gamma:
                            gamma = g2
                            event = 0
                            event_idx = k

                kd = -1
                for i in range(nA):
                    if fabs(w[i]) > TINY:
                        g1 = -alpha[i] / w[i]
                        if g1 > TINY and g1 < gamma:
                            gamma = g1
                            event = 1
                            kd = i
                if event == 1:
                    event_idx = kd

                for i in range(nA):
                    alpha[i] += gamma * w[i]
                neg_gamma = -gamma
                daxpy(&K, &neg_gamma, adir, &one, cp, &one)
                lam -= gamma
                if want_path:
                    path[n_path] = lam
                    n_path += 1

                if event == -1:
                    break
                if event == 0:
                    _activate(Dp, gp, Lp, act, st, sgn, alpha, cp, grow, &nA,
                              event_idx, q, K, maxA)
                else:
                    drop_j = act[event_idx]
                    st[drop_j] = 0
                    coefp[drop_j] = 0.0
                    for i in range(event_idx, nA - 1):
                        alpha[i] = alpha[i + 1]
                        sgn[i] = sgn[i + 1]
                        act[i] = act[i + 1]
                    alpha[nA - 1] = 0.0
                    for k in range(K):
                        for i in range(event_idx, nA - 1):
                            gp[k * maxA + i] = gp[k * maxA + i + 1]
                        gp[k * maxA + nA - 1] = 0.0
                    _chol_drop(Lp, maxA, nA, event_idx)
                    nA -= 1

        for i in range(nA):
            coefp[act[i]] = alpha[i]

    return coef_arr, status, n_steps, (path_arr[:n_path].copy() if want_path else None)


def block_scores(const double[:, ::1] target, const double[:, ::1] aux,
                 const long[::1] block_rows, const long[::1] block_cols):
    """Cosine similarity of ``target`` against in-bounds blocks of ``aux``."""
    cdef int p = target.shape[0]
    cdef int qq = target.shape[1]
    cdef int n = block_rows.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n)
    cdef double[::1] scores = out
    cdef double tnorm2 = 0.0, dot, bnorm2, v
    cdef int i, r, cc, br, bc

    with nogil:
        for r in range(p):
            for cc in range(qq):
                tnorm2 += target[r, cc] * target[r, cc]
        if tnorm2 > 0.0:
            for i in range(n):
                br = <int>block_rows[i]
                bc = <int>block_cols[i]
                dot = 0.0
                bnorm2 = 0.0
                for r in range(p):
                    for cc in range(qq):
                        v = aux[br + r, bc + cc]
                        dot += v * target[r, cc]
                        bnorm2 += v * v
                if bnorm2 > 0.0:
                    scores[i] = dot / sqrt(bnorm2 * tnorm2)
    return out
