# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Mirrors ``_pykernels`` exactly: the same counter-based variates, the same
branch selection rule and the same per-target accumulation order.
Trajectories run one per loop iteration in a ``prange``; evolution gathers
into each target site, so threads never write to shared memory.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

NAME = "cython"

cdef enum:
    MAXD = 16
    MAXDIM = 8

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MUL1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MUL2 = 0x94D049BB133111EBULL
cdef uint64_t SITE_DOMAIN = 0x5BD1E9955BD1E995ULL
cdef uint64_t STREAM_DOMAIN = 0x2545F4914F6CDD1DULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double PROB_TOL = 1e-9


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MUL1
    z = (z ^ (z >> 27)) * MUL2
    return z ^ (z >> 31)


cdef inline uint64_t absorb(uint64_t h, int64_t value) noexcept nogil:
    return mix64((h ^ <uint64_t>value) + GOLDEN)


cdef inline double to_unit(uint64_t h) noexcept nogil:
    return <double>(h >> 11) * INV_2_53


cdef inline int64_t site_code(const int64_t* x, int d, int kind, const int64_t[::1] tile,
                              const int64_t[::1] period, const double[::1] cum,
                              uint64_t fseed) noexcept nogil:
    cdef int a
    cdef int64_t flat = 0, r
    cdef uint64_t h
    cdef double u
    cdef int64_t c
    if kind == 0:
        for a in range(d):
            r = x[a] % period[a]
            if r < 0:
                r = r + period[a]
            flat = flat * period[a] + r
        return tile[flat]
    h = mix64(fseed ^ SITE_DOMAIN)
    for a in range(d):
        h = absorb(h, x[a])
    u = to_unit(h)
    c = 0
    while c < cum.shape[0] and cum[c] <= u:
        c = c + 1
    return c


cdef int walk_one(const double complex[:, :, :, ::1] kraus, const double complex[:, :, :, ::1] gram,
                  const int64_t[::1] nbranch, const int64_t[:, :, ::1] disp,
                  int kind, const int64_t[::1] tile, const int64_t[::1] period,
                  const double[::1] cum, uint64_t fseed,
                  const double complex[:, ::1] rho0, const int64_t[::1] x0,
                  int n_steps, int64_t index, uint64_t seed, int64_t* xout) noexcept nogil:
    cdef int D = rho0.shape[0]
    cdef int d = x0.shape[0]
    cdef double complex rho[MAXD * MAXD]
    cdef double complex tmp[MAXD * MAXD]
    cdef double complex m[MAXD * MAXD]
    cdef double p[64]
    cdef int64_t x[MAXDIM]
    cdef int i, j, k, a, b, nb, t, chosen
    cdef int64_t c
    cdef double total, target, cumsum, tr
    cdef double complex acc, kv
    cdef uint64_t key = absorb(mix64(seed ^ STREAM_DOMAIN), index)

    for i in range(D):
        for j in range(D):
            rho[i * D + j] = rho0[i, j]
    for a in range(d):
        x[a] = x0[a]

    for t in range(n_steps):
        c = site_code(x, d, kind, tile, period, cum, fseed)
        nb = nbranch[c]
        total = 0.0
        for b in range(nb):
            acc = 0.0
            for i in range(D):
                for j in range(D):
                    acc = acc + gram[c, b, i, j] * rho[j * D + i]
            p[b] = acc.real
            total = total + p[b]
        if total <= 0.0:
            return 2
        if total - 1.0 > PROB_TOL or 1.0 - total > PROB_TOL:
            return 1
        target = to_unit(absorb(key, t)) * total
        chosen = -1
        cumsum = 0.0
        for b in range(nb):
            cumsum = cumsum + p[b]
            if target < cumsum:
                chosen = b
                break
        if chosen < 0:
            for b in range(nb - 1, -1, -1):
                if p[b] > 0.0:
                    chosen = b
                    break
        # tmp = K rho, skipping structural zeros of K
        for i in range(D * D):
            tmp[i] = 0.0
        for i in range(D):
            for k in range(D):
                kv = kraus[c, chosen, i, k]
                if kv.real == 0.0 and kv.imag == 0.0:
                    continue
                for j in range(D):
                    tmp[i * D + j] = tmp[i * D + j] + kv * rho[k * D + j]
        # m = tmp K^dag
        for i in range(D * D):
            m[i] = 0.0
        for j in range(D):
            for k in range(D):
                kv = kraus[c, chosen, j, k]
                if kv.real == 0.0 and kv.imag == 0.0:
                    continue
                kv = kv.conjugate()
                for i in range(D):
                    m[i * D + j] = m[i * D + j] + tmp[i * D + k] * kv
        tr = 0.0
        for i in range(D):
            tr = tr + m[i * D + i].real
        for i in range(D):
            for j in range(D):
                rho[i * D + j] = (m[i * D + j] + m[j * D + i].conjugate()) / 2.0 / tr
        for a in range(d):
            x[a] = x[a] + disp[c, chosen, a]

    for a in range(d):
        xout[a] = x[a]
    return 0


def run_walkers(kraus, gram, nbranch, disp, int field_kind, tile, period, cumulative, field_seed,
                rho0, x0, int n_steps, indices, seed, int threads=1):
    """Endpoints of the trajectories ``indices``; returns ``(X, (status, index))``."""
    cdef const double complex[:, :, :, ::1] kv = np.ascontiguousarray(kraus, dtype=np.complex128)
    cdef const double complex[:, :, :, ::1] gv = np.ascontiguousarray(gram, dtype=np.complex128)
    cdef const int64_t[::1] nbv = np.ascontiguousarray(nbranch, dtype=np.int64)
    cdef const int64_t[:, :, ::1] dv = np.ascontiguousarray(disp, dtype=np.int64)
    cdef const int64_t[::1] tv = np.ascontiguousarray(tile, dtype=np.int64)
    cdef const int64_t[::1] pv = np.ascontiguousarray(period, dtype=np.int64)
    cdef const double[::1] cv = np.ascontiguousarray(cumulative, dtype=np.float64)
    cdef const double complex[:, ::1] r0 = np.ascontiguousarray(rho0, dtype=np.complex128)
    cdef const int64_t[::1] xv = np.ascontiguousarray(x0, dtype=np.int64)
    cdef const int64_t[::1] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef uint64_t fs = <uint64_t>int(field_seed)
    cdef uint64_t s = <uint64_t>int(seed)
    cdef Py_ssize_t count = idx.shape[0]
    cdef int d = xv.shape[0]
    if r0.shape[0] > MAXD or d > MAXDIM or kv.shape[1] > 64:
        raise ValueError("problem size exceeds compiled kernel limits")
    out = np.zeros((count, d), dtype=np.int64)
    status = np.zeros(count, dtype=np.int32)
    cdef int64_t[:, ::1] ov = out
    cdef int[::1] sv = status
    cdef Py_ssize_t n
    cdef int nthreads = max(threads, 1)
    for n in prange(count, nogil=True, num_threads=nthreads, schedule="dynamic"):
        sv[n] = walk_one(kv, gv, nbv, dv, field_kind, tv, pv, cv, fs, r0, xv,
                         n_steps, idx[n], s, &ov[n, 0])
    bad = np.flatnonzero(status)
    if bad.size:
        return None, (int(status[bad[0]]), int(indices[bad[0]]))
    return out, (0, -1)


def evolve_sites(rho_in, mass, codes, kraus, nbranch, disp, shape, box_lo, box_hi, int threads=1):
    """One exact step of the lattice channel, gathered per target site."""
    cdef const double complex[:, :, ::1] rin = np.ascontiguousarray(rho_in, dtype=np.complex128)
    cdef const double[::1] mv = np.ascontiguousarray(mass, dtype=np.float64)
    cdef const int64_t[::1] cv = np.ascontiguousarray(codes, dtype=np.int64)
    cdef const double complex[:, :, :, ::1] kv = np.ascontiguousarray(kraus, dtype=np.complex128)
    cdef const int64_t[::1] nbv = np.ascontiguousarray(nbranch, dtype=np.int64)
    cdef const int64_t[:, :, ::1] dv = np.ascontiguousarray(disp, dtype=np.int64)
    cdef const int64_t[::1] shp = np.ascontiguousarray(shape, dtype=np.int64)
    cdef int d = shp.shape[0]
    cdef int D = rin.shape[1]
    if d > MAXDIM or D > MAXD:
        raise ValueError("problem size exceeds compiled kernel limits")
    # sources live in [box_lo, box_hi); targets in that box grown by the reach
    reach = int(np.abs(np.asarray(disp)).max())
    lo = np.maximum(np.asarray(box_lo, dtype=np.int64) - reach, 0)
    hi = np.minimum(np.asarray(box_hi, dtype=np.int64) + reach, np.asarray(shape, dtype=np.int64))
    cdef const int64_t[::1] tlo = np.ascontiguousarray(lo)
    cdef const int64_t[::1] tdims = np.ascontiguousarray(hi - lo)
    cdef const int64_t[::1] slo = np.ascontiguousarray(box_lo, dtype=np.int64)
    cdef const int64_t[::1] shi = np.ascontiguousarray(box_hi, dtype=np.int64)
    out = np.zeros_like(np.asarray(rho_in), dtype=np.complex128)
    cdef double complex[:, :, ::1] rout = out
    cdef Py_ssize_t ntarget = int(np.prod(hi - lo))
    cdef Py_ssize_t n
    cdef int nthreads = max(threads, 1)
    for n in prange(ntarget, nogil=True, num_threads=nthreads, schedule="static"):
        gather_one(n, rin, mv, cv, kv, nbv, dv, shp, tlo, tdims, slo, shi, d, D, rout)
    return out


cdef void gather_one(Py_ssize_t n, const double complex[:, :, ::1] rin, const double[::1] mass,
                     const int64_t[::1] codes, const double complex[:, :, :, ::1] kraus,
                     const int64_t[::1] nbranch, const int64_t[:, :, ::1] disp,
                     const int64_t[::1] shape, const int64_t[::1] tlo, const int64_t[::1] tdims,
                     const int64_t[::1] slo, const int64_t[::1] shi, int d, int D,
                     double complex[:, :, ::1] rout) noexcept nogil:
    cdef int64_t y[MAXDIM]
    cdef int64_t sx
    cdef double complex tmp[MAXD * MAXD]
    cdef Py_ssize_t rem = n, tflat = 0, sflat
    cdef int a, b, i, j, k, inside
    cdef int64_t c, C = kraus.shape[0]
    cdef double complex kv
    for a in range(d - 1, -1, -1):
        y[a] = tlo[a] + rem % tdims[a]
        rem = rem // tdims[a]
    for a in range(d):
        tflat = tflat * shape[a] + y[a]
    for c in range(C):
        for b in range(nbranch[c]):
            inside = 1
            sflat = 0
            for a in range(d):
                sx = y[a] - disp[c, b, a]
                if sx < slo[a] or sx >= shi[a]:
                    inside = 0
                    break
                sflat = sflat * shape[a] + sx
            if not inside:
                continue
            if mass[sflat] == 0.0 or codes[sflat] != c:
                continue
            for i in range(D * D):
                tmp[i] = 0.0
            for i in range(D):
                for k in range(D):
                    kv = kraus[c, b, i, k]
                    if kv.real == 0.0 and kv.imag == 0.0:
                        continue
                    for j in range(D):
                        tmp[i * D + j] = tmp[i * D + j] + kv * rin[sflat, k, j]
            for j in range(D):
                for k in range(D):
                    kv = kraus[c, b, j, k]
                    if kv.real == 0.0 and kv.imag == 0.0:
                        continue
                    kv = kv.conjugate()
                    for i in range(D):
                        rout[tflat, i, j] = rout[tflat, i, j] + tmp[i * D + k] * kv
