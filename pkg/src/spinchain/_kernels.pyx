# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled table solver.

Loops over windows (shortest first) and cross sequences, applying the
discontinuity and jump rules at window edges and a Heun step elsewhere. The
kernel integral is a brute-force walk over the ordered tau simplex with
prefix products reused between neighbouring nodes.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

cdef enum:
    MAXM = 9
    MAXC = 4


from spinchain.errors import DependencyError, NonFiniteError


cdef inline void mm2(double complex* out, const double complex* x, const double complex* y) noexcept nogil:
    # out = x @ y for row-major 2x2
    out[0] = x[0] * y[0] + x[1] * y[2]
    out[1] = x[0] * y[1] + x[1] * y[3]
    out[2] = x[2] * y[0] + x[3] * y[2]
    out[3] = x[2] * y[1] + x[3] * y[3]


cdef struct Ctx:
    Py_ssize_t n
    Py_ssize_t ncol
    Py_ssize_t nb
    const double* h
    const double* sgn
    const double complex* W
    const double complex* Bm
    const long long* seq_len
    const long long* seq_p
    const long long* slice_id
    const long long* p_last
    const long long* entry_base
    const long long* pairs
    const long long* npair
    Py_ssize_t maxnp
    Py_ssize_t maxpr
    int mbar
    double complex* phi
    const unsigned char* done
    long long count
    int error


cdef inline double twt(const double* h, Py_ssize_t q, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef double w = 0.0
    if q > lo:
        w += h[q - 1]
    if q < hi:
        w += h[q]
    return 0.5 * w


cdef inline long long entry_of(Ctx* c, Py_ssize_t s, Py_ssize_t i, Py_ssize_t j,
                               Py_ssize_t a, Py_ssize_t b, long long cur) noexcept nogil:
    cdef Py_ssize_t nb1 = c.nb + 1
    cdef long long ss = c.slice_id[(s * nb1 + i) * nb1 + j]
    cdef long long pl = c.p_last[ss]
    cdef long long e = c.entry_base[ss] + a * (c.n - pl) + (b - pl)
    if c.done[e] == 0 and e != cur:
        c.error = 1
    return e


cdef void kernel(Ctx* c, Py_ssize_t a, Py_ssize_t s, Py_ssize_t f, long long cur,
                 double complex* out) noexcept nogil:
    cdef Py_ssize_t ncol = c.ncol
    cdef Py_ssize_t nseq = c.seq_len[s]
    cdef const long long* pos = c.seq_p + s * c.nb
    cdef Py_ssize_t tau[MAXM + 1]
    cdef Py_ssize_t kk[MAXM + 1]
    cdef double complex R[MAXM + 1][MAXC * 4]
    cdef double complex tmp[4]
    cdef double complex tmp2[4]
    cdef double complex acc[MAXC * 4]
    cdef double complex lc, prod, scal
    cdef double w, sg, coef
    cdef Py_ssize_t m, M, d, i, col, q, r, pi, pj, kprev, tprev, mi
    cdef long long e
    cdef const long long* pq
    for i in range(ncol * 4):
        acc[i] = 0.0
        out[i] = 0.0
    if f == a:
        return
    for M in range(1, c.mbar + 1, 2):
        mi = (M - 1) // 2
        coef = -1.0 if ((M + 1) // 2) % 2 else 1.0
        for m in range(M):
            tau[m] = a
        d = 0
        while True:
            # refresh prefix products from depth d
            for m in range(d, M):
                kprev = kk[m - 1] if m > 0 else 0
                tprev = tau[m - 1] if m > 0 else a
                r = kprev
                while r < nseq and pos[r] <= tau[m]:
                    r += 1
                kk[m] = r
                e = entry_of(c, s, kprev, r, tprev, tau[m], cur)
                for col in range(ncol):
                    if m == 0:
                        mm2(&R[0][col * 4], c.W + tau[0] * 4, c.phi + (e * ncol + col) * 4)
                    else:
                        mm2(tmp, c.phi + (e * ncol + col) * 4, &R[m - 1][col * 4])
                        mm2(&R[m][col * 4], c.W + tau[m] * 4, tmp)
            if c.error:
                return
            # leaf
            w = 1.0
            for m in range(M):
                w *= twt(c.h, tau[m], a, tau[m + 1] if m + 1 < M else f)
            if w != 0.0:
                c.count += 1
                sg = c.sgn[f]
                for m in range(M):
                    sg *= c.sgn[tau[m]]
                tau[M] = f
                lc = 0.0
                for q in range(c.npair[mi]):
                    pq = c.pairs + ((mi * c.maxnp + q) * c.maxpr) * 2
                    prod = 1.0
                    for r in range((M + 1) // 2):
                        pi = tau[pq[2 * r]]
                        pj = tau[pq[2 * r + 1]]
                        prod = prod * c.Bm[pi * c.n + pj]
                    lc = lc + prod
                scal = coef * w * sg * lc
                if scal != 0.0:
                    e = entry_of(c, s, kk[M - 1], nseq, tau[M - 1], f, cur)
                    if c.error:
                        return
                    for col in range(ncol):
                        mm2(tmp2, c.phi + (e * ncol + col) * 4, &R[M - 1][col * 4])
                        for i in range(4):
                            acc[col * 4 + i] += scal * tmp2[i]
            # advance the non-descending odometer
            d = M - 1
            while d >= 0 and tau[d] == f:
                d -= 1
            if d < 0:
                break
            tau[d] += 1
            for m in range(d + 1, M):
                tau[m] = tau[d]
    for col in range(ncol):
        mm2(out + col * 4, c.W + f * 4, &acc[col * 4])


def solve_levels(Py_ssize_t n, Py_ssize_t n_steps, double[::1] h, double[::1] sgn,
                 double complex[:, :, ::1] W, double complex[:, :, :, ::1] V,
                 double complex[:, ::1] Bm, double complex[:, :, ::1] init,
                 long long[::1] seq_len, long long[:, ::1] seq_p, long long[:, ::1] seq_a,
                 long long[:, :, ::1] slice_id, long long[::1] p_first, long long[::1] p_last,
                 long long[::1] entry_base, pairings, int mbar,
                 double complex[:, :, :, ::1] phi, unsigned char[::1] done, int n_threads=1):
    """Fill ``phi`` for every window and sequence; return integrand-evaluation count."""
    cdef Ctx c
    cdef Py_ssize_t ncol = phi.shape[1]
    cdef Py_ssize_t nseqs = seq_len.shape[0]
    cdef Py_ssize_t nb = seq_p.shape[1]
    cdef Py_ssize_t lvl, a, b, s, ns, col, i, zm = n_steps, zp = n_steps + 1
    cdef long long cur, src, prev, dd, width
    cdef double step
    cdef double complex k0[MAXC * 4]
    cdef double complex k1[MAXC * 4]
    cdef double complex base[MAXC * 4]
    cdef const double complex* vv
    cdef int fail = 0
    cdef Py_ssize_t fa = 0, fb = 0, fs = 0
    if ncol > MAXC:
        raise ValueError("too many columns")
    if mbar > MAXM:
        raise ValueError("kernel order too high")
    pairs_arr, npair_arr = _pack_pairings(pairings, mbar)
    cdef long long[:, :, :, ::1] pairs = pairs_arr
    cdef long long[::1] npair = npair_arr
    cdef long long[:, ::1] seq_p_safe = seq_p if nb > 0 else np.zeros((nseqs, 1), dtype=np.int64)
    cdef long long[:, ::1] seq_a_safe = seq_a if nb > 0 else np.zeros((nseqs, 1), dtype=np.int64)
    c.n = n
    c.ncol = ncol
    c.nb = nb
    c.h = &h[0]
    c.sgn = &sgn[0]
    c.W = &W[0, 0, 0]
    c.Bm = &Bm[0, 0]
    c.seq_len = &seq_len[0]
    c.seq_p = &seq_p_safe[0, 0]
    c.slice_id = &slice_id[0, 0, 0]
    c.p_last = &p_last[0]
    c.entry_base = &entry_base[0]
    c.pairs = &pairs[0, 0, 0, 0]
    c.npair = &npair[0]
    c.maxnp = pairs.shape[1]
    c.maxpr = pairs.shape[2]
    c.mbar = mbar
    c.phi = &phi[0, 0, 0, 0]
    c.done = &done[0]
    c.count = 0
    c.error = 0
    with nogil:
        for lvl in range(n):
            for a in range(n - lvl):
                b = a + lvl
                for s in range(nseqs):
                    if p_first[s] < a or p_last[s] > b:
                        continue
                    ns = seq_len[s]
                    width = n - p_last[s]
                    cur = entry_base[s] + a * width + (b - p_last[s])
                    if ns > 0 and b == p_last[s]:
                        dd = slice_id[s, 0, ns - 1]
                        src = entry_base[dd] + a * (n - p_last[dd]) + (b - p_last[dd])
                        if done[src] == 0:
                            c.error = 1
                        else:
                            vv = &V[b, seq_a_safe[s, ns - 1], 0, 0]
                            for col in range(ncol):
                                mm2(&phi[cur, col, 0, 0], vv, &phi[src, col, 0, 0])
                    elif ns == 0 and a == b:
                        for col in range(ncol):
                            phi[cur, col, 0, 0] = 1.0
                            phi[cur, col, 0, 1] = 0.0
                            phi[cur, col, 1, 0] = 0.0
                            phi[cur, col, 1, 1] = 1.0
                    elif b == zp and a <= zm:
                        src = entry_base[s] + a * width + (zm - p_last[s])
                        for col in range(ncol):
                            mm2(&phi[cur, col, 0, 0], &init[col, 0, 0], &phi[src, col, 0, 0])
                    else:
                        prev = entry_base[s] + a * width + (b - 1 - p_last[s])
                        step = h[b - 1]
                        kernel(&c, a, s, b - 1, cur, k0)
                        for i in range(ncol * 4):
                            base[i] = c.phi[prev * ncol * 4 + i]
                            c.phi[cur * ncol * 4 + i] = base[i] + step * k0[i]
                        kernel(&c, a, s, b, cur, k1)
                        for i in range(ncol * 4):
                            c.phi[cur * ncol * 4 + i] = base[i] + 0.5 * step * (k0[i] + k1[i])
                    if c.error:
                        fail = 1
                        fa = a
                        fb = b
                        break
                    for i in range(ncol * 4):
                        if not (isfinite(c.phi[cur * ncol * 4 + i].real)
                                and isfinite(c.phi[cur * ncol * 4 + i].imag)):
                            fail = 2
                    if fail:
                        fa = a
                        fb = b
                        fs = s
                        break
                    done[cur] = 1
                if fail:
                    break
            if fail:
                break
    if fail == 1:
        raise DependencyError(f"missing table entry while extending window [{fa}, {fb}]")
    if fail == 2:
        raise NonFiniteError(f"non-finite propagator on window [{fa}, {fb}], sequence {fs}")
    return int(c.count)


def _pack_pairings(pairings, int mbar):
    orders = list(range(1, mbar + 1, 2))
    maxnp = max([len(pairings[m]) for m in orders] + [1])
    maxpr = max(1, (mbar + 1) // 2)
    arr = np.zeros((max(len(orders), 1), maxnp, maxpr, 2), dtype=np.int64)
    cnt = np.zeros(max(len(orders), 1), dtype=np.int64)
    for k, m in enumerate(orders):
        cnt[k] = len(pairings[m])
        for q, pairing in enumerate(pairings[m]):
            for r, (i, j) in enumerate(pairing):
                arr[k, q, r, 0] = i
                arr[k, q, r, 1] = j
    return arr, cnt
