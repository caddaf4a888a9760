# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernel: same arithmetic as the pure loops, minus overhead.

run_span advances the network over a contiguous range of steps with fixed
demands, recording samples in caller-provided buffers.  Cost gradients are
dispatched on small integer codes; constraint boxes use +/-inf for free
coordinates.  Kept intentionally dumb: one thread, fixed reduction order.
"""

import numpy as np

from libc.math cimport tanh


cdef void _grad_row(int kind, const double* p, const double* x, double* out, int n) noexcept nogil:
    cdef int k, l
    cdef double t, a, w, acc
    if kind == 0:  # diagonal quadratic: q_1..q_n, b_1..b_n
        for k in range(n):
            out[k] = 2.0 * p[k] * x[k] + p[n + k]
    elif kind == 1:  # dispatch: gamma, beta, c (n == 1)
        t = x[0] - p[2]
        if t > 0:
            out[0] = 2.0 * p[0] * x[0] + p[1]
        elif t < 0:
            out[0] = 2.0 * p[0] * x[0] - p[1]
        else:
            out[0] = 2.0 * p[0] * x[0]
    elif kind == 2:  # saturating quadratic: a, weight
        a = p[0]
        w = p[1]
        for k in range(n):
            t = a * x[k] * x[k] + 1.0
            out[k] = 2.0 * x[k] / (t * t) + 2.0 * w * x[k]
    elif kind == 3:  # logcosh quadratic: scale, weight
        a = p[0]
        w = p[1]
        for k in range(n):
            out[k] = a * tanh(a * x[k]) + 2.0 * w * x[k]
    elif kind == 4:  # squared distance: weight, c_1..c_n
        w = p[0]
        for k in range(n):
            out[k] = 2.0 * w * (x[k] - p[1 + k])
    else:  # 5: full quadratic: Q row-major (n*n), b (n)
        for k in range(n):
            acc = p[n * n + k]
            for l in range(n):
                acc += 2.0 * p[k * n + l] * x[l]
            out[k] = acc


cdef void _grads(const int* kinds, const double* params, int pw,
                 const double* x, double* out, int N, int n) noexcept nogil:
    cdef int i
    for i in range(N):
        _grad_row(kinds[i], params + i * pw, x + i * n, out + i * n, n)


cdef void _matmul_lap(const double* L, const double* v, double* out, int N, int n) noexcept nogil:
    # out = L @ v with a fixed j-ascending reduction order
    cdef int i, j, k
    cdef double acc
    for i in range(N):
        for k in range(n):
            acc = 0.0
            for j in range(N):
                acc += L[i * N + j] * v[j * n + k]
            out[i * n + k] = acc


cdef void _field(const double* L, const int* kinds, const double* params, int pw,
                 const double* d, const double* x, const double* mu, const double* eta,
                 double k1, double k2, double k3,
                 double* fx, double* fmu, double* feta,
                 double* gbuf, double* sbuf, double* lbuf, int N, int n) noexcept nogil:
    cdef int m = N * n
    cdef int i
    _grads(kinds, params, pw, x, gbuf, N, n)
    for i in range(m):
        sbuf[i] = eta[i] - x[i] + d[i]
        fx[i] = mu[i] - gbuf[i]
    _matmul_lap(L, mu, lbuf, N, n)
    for i in range(m):
        fmu[i] = k1 * sbuf[i] - k2 * lbuf[i]
    _matmul_lap(L, sbuf, lbuf, N, n)
    for i in range(m):
        feta[i] = -k3 * lbuf[i]


def run_span(int smooth_flag,
             double[:, ::1] L, int[::1] kinds, double[:, ::1] params,
             double[:, ::1] lo, double[:, ::1] hi, double[:, ::1] d,
             double[:, ::1] x, double[:, ::1] mu, double[:, ::1] eta,
             double k1, double k2, double k3, double h,
             long g0, long g1, long rec,
             double[::1] times, double[:, :, ::1] rx, double[:, :, ::1] rmu,
             double[:, :, ::1] reta, long pos):
    """Advance steps g0..g1-1 in place; record samples where g % rec == 0."""
    cdef int N = x.shape[0]
    cdef int n = x.shape[1]
    cdef int m = N * n
    cdef int pw = params.shape[1]
    cdef long g
    cdef int i, k
    cdef double xn, w

    scratch = np.empty((19, N, n))
    cdef double[:, :, ::1] sc = scratch
    cdef double* gbuf = &sc[0, 0, 0]
    cdef double* sbuf = &sc[1, 0, 0]
    cdef double* lbuf = &sc[2, 0, 0]
    cdef double* f1x = &sc[3, 0, 0]
    cdef double* f1m = &sc[4, 0, 0]
    cdef double* f1e = &sc[5, 0, 0]
    cdef double* f2x = &sc[6, 0, 0]
    cdef double* f2m = &sc[7, 0, 0]
    cdef double* f2e = &sc[8, 0, 0]
    cdef double* f3x = &sc[9, 0, 0]
    cdef double* f3m = &sc[10, 0, 0]
    cdef double* f3e = &sc[11, 0, 0]
    cdef double* xt = &sc[12, 0, 0]
    cdef double* mt = &sc[13, 0, 0]
    cdef double* et = &sc[14, 0, 0]
    cdef double* lmu = &sc[15, 0, 0]
    cdef double* f4x = &sc[16, 0, 0]
    cdef double* f4m = &sc[17, 0, 0]
    cdef double* f4e = &sc[18, 0, 0]

    cdef double* xp = &x[0, 0]
    cdef double* mp = &mu[0, 0]
    cdef double* ep = &eta[0, 0]
    cdef double* dp = &d[0, 0]
    cdef double* Lp = &L[0, 0]
    cdef double* lop = &lo[0, 0]
    cdef double* hip = &hi[0, 0]
    cdef double* pp = &params[0, 0]
    cdef int* kp = &kinds[0]

    with nogil:
        for g in range(g0, g1):
            if g % rec == 0:
                times[pos] = g * h
                for i in range(N):
                    for k in range(n):
                        rx[pos, i, k] = x[i, k]
                        rmu[pos, i, k] = mu[i, k]
                        reta[pos, i, k] = eta[i, k]
                pos += 1
            if smooth_flag == 0:
                _grads(kp, pp, pw, xp, gbuf, N, n)
                for i in range(m):
                    sbuf[i] = ep[i] - xp[i] + dp[i]
                _matmul_lap(Lp, mp, lmu, N, n)
                _matmul_lap(Lp, sbuf, lbuf, N, n)
                for i in range(m):
                    xn = xp[i] + h * (mp[i] - gbuf[i])
                    if xn < lop[i]:
                        xn = lop[i]
                    elif xn > hip[i]:
                        xn = hip[i]
                    xp[i] = xn
                    mp[i] = mp[i] + h * (k1 * sbuf[i] - k2 * lmu[i])
                    ep[i] = ep[i] - (h * k3) * lbuf[i]
            else:
                _field(Lp, kp, pp, pw, dp, xp, mp, ep, k1, k2, k3,
                       f1x, f1m, f1e, gbuf, sbuf, lbuf, N, n)
                for i in range(m):
                    xt[i] = xp[i] + 0.5 * h * f1x[i]
                    mt[i] = mp[i] + 0.5 * h * f1m[i]
                    et[i] = ep[i] + 0.5 * h * f1e[i]
                _field(Lp, kp, pp, pw, dp, xt, mt, et, k1, k2, k3,
                       f2x, f2m, f2e, gbuf, sbuf, lbuf, N, n)
                for i in range(m):
                    xt[i] = xp[i] + 0.5 * h * f2x[i]
                    mt[i] = mp[i] + 0.5 * h * f2m[i]
                    et[i] = ep[i] + 0.5 * h * f2e[i]
                _field(Lp, kp, pp, pw, dp, xt, mt, et, k1, k2, k3,
                       f3x, f3m, f3e, gbuf, sbuf, lbuf, N, n)
                for i in range(m):
                    xt[i] = xp[i] + h * f3x[i]
                    mt[i] = mp[i] + h * f3m[i]
                    et[i] = ep[i] + h * f3e[i]
                _field(Lp, kp, pp, pw, dp, xt, mt, et, k1, k2, k3,
                       f4x, f4m, f4e, gbuf, sbuf, lbuf, N, n)
                w = h / 6.0
                for i in range(m):
                    xp[i] = xp[i] + w * (f1x[i] + 2.0 * f2x[i] + 2.0 * f3x[i] + f4x[i])
                    mp[i] = mp[i] + w * (f1m[i] + 2.0 * f2m[i] + 2.0 * f3m[i] + f4m[i])
                    ep[i] = ep[i] + w * (f1e[i] + 2.0 * f2e[i] + 2.0 * f3e[i] + f4e[i])
    return pos
