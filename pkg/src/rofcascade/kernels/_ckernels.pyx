# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled cascade kernel: circular FIR + cubic PA, repeated per stage.

Long tap sets on power-of-two frames go through an in-place radix-2 FFT;
everything else uses the direct FIR sum.
"""

import numpy as np

from libc.math cimport cos, sin, M_PI
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

cdef Py_ssize_t FFT_MIN_TAPS = 12


cdef inline void _pa(double ur, double ui, double vr, double vi, double gain,
                     double lr, double li, double* yr, double* yi) noexcept nogil:
    cdef double p = vr * vr + vi * vi
    yr[0] = gain * (ur + (lr * vr - li * vi) * p)
    yi[0] = gain * (ui + (lr * vi + li * vr) * p)


cdef void _fir_stage(const double* er, const double* ei, const double* tr, const double* ti,
                     Py_ssize_t N, Py_ssize_t L, double gain, double lr, double li,
                     bint literal, double b0r, double b0i, double* yr, double* yi) noexcept nogil:
    # er/ei hold N + L - 1 samples: the frame preceded by its own last L - 1 samples
    cdef Py_ssize_t n, j, head = L - 1
    cdef double ur0, ui0, ur1, ui1, ur, ui, vr, vi, a, c
    cdef const double* pr
    cdef const double* pi
    for n in range(N):
        pr = er + n
        pi = ei + n
        ur0 = 0.0
        ui0 = 0.0
        ur1 = 0.0
        ui1 = 0.0
        j = 0
        while j + 1 < L:
            ur0 += tr[j] * pr[j] - ti[j] * pi[j]
            ui0 += tr[j] * pi[j] + ti[j] * pr[j]
            ur1 += tr[j + 1] * pr[j + 1] - ti[j + 1] * pi[j + 1]
            ui1 += tr[j + 1] * pi[j + 1] + ti[j + 1] * pr[j + 1]
            j += 2
        if j < L:
            ur0 += tr[j] * pr[j] - ti[j] * pi[j]
            ui0 += tr[j] * pi[j] + ti[j] * pr[j]
        ur = ur0 + ur1
        ui = ui0 + ui1
        vr = ur
        vi = ui
        if literal:
            a = er[head + n]
            c = ei[head + n]
            vr = ur - (b0r * a - b0i * c)
            vi = ui - (b0r * c + b0i * a)
        _pa(ur, ui, vr, vi, gain, lr, li, yr + n, yi + n)


cdef void _fft(double* re, double* im, Py_ssize_t N, const Py_ssize_t* rev,
               const double* wr, const double* wi, bint inverse) noexcept nogil:
    """In-place radix-2 DIT transform; unnormalized in both directions."""
    cdef Py_ssize_t i, j, k, half, step, size
    cdef double tr, ti, xr, xi, cr, ci
    for i in range(N):
        j = rev[i]
        if j > i:
            tr = re[i]; re[i] = re[j]; re[j] = tr
            ti = im[i]; im[i] = im[j]; im[j] = ti
    size = 2
    while size <= N:
        half = size >> 1
        step = N // size
        i = 0
        while i < N:
            for k in range(half):
                cr = wr[k * step]
                ci = -wi[k * step] if inverse else wi[k * step]
                xr = re[i + k + half]
                xi = im[i + k + half]
                tr = xr * cr - xi * ci
                ti = xr * ci + xi * cr
                re[i + k + half] = re[i + k] - tr
                im[i + k + half] = im[i + k] - ti
                re[i + k] += tr
                im[i + k] += ti
            i += size
        size <<= 1


cdef void _fft_stage(const double* xr, const double* xi, const double* hr, const double* hi,
                     double* wre, double* wim, Py_ssize_t N, const Py_ssize_t* rev,
                     const double* twr, const double* twi, double gain, double lr, double li,
                     bint literal, double b0r, double b0i, double* yr, double* yi) noexcept nogil:
    cdef Py_ssize_t n
    cdef double a, c, ur, ui, vr, vi, inv = 1.0 / N
    memcpy(wre, xr, N * sizeof(double))
    memcpy(wim, xi, N * sizeof(double))
    _fft(wre, wim, N, rev, twr, twi, False)
    for n in range(N):
        a = wre[n]
        c = wim[n]
        wre[n] = a * hr[n] - c * hi[n]
        wim[n] = a * hi[n] + c * hr[n]
    _fft(wre, wim, N, rev, twr, twi, True)
    for n in range(N):
        ur = wre[n] * inv
        ui = wim[n] * inv
        vr = ur
        vi = ui
        if literal:
            vr = ur - (b0r * xr[n] - b0i * xi[n])
            vi = ui - (b0r * xi[n] + b0i * xr[n])
        _pa(ur, ui, vr, vi, gain, lr, li, yr + n, yi + n)


def cascade_stages(const double complex[:, ::1] x, const double complex[::1] beta,
                   double gain, double complex lam, int n_stages, bint literal=False):
    cdef Py_ssize_t B = x.shape[0], N = x.shape[1], L = beta.shape[0]
    cdef Py_ssize_t b, s, n, l, k, bits, head = L - 1
    cdef double lr = lam.real, li = lam.imag
    cdef double b0r, b0i, a, c
    cdef bint use_fft

    if L < 1 or L > N:
        raise ValueError("tap count must be in [1, frame length]")
    b0r = beta[0].real
    b0i = beta[0].imag
    out = np.empty((n_stages, B, N), dtype=np.complex128)
    if n_stages == 0 or B == 0:
        return out
    cdef double[:, :, :, ::1] o = out.view(np.float64).reshape(n_stages, B, N, 2)
    use_fft = L >= FFT_MIN_TAPS and (N & (N - 1)) == 0

    # layout: ext re/im (N + head each), taps re/im (L or N each), work re/im, out re/im, twiddles
    cdef Py_ssize_t nt = N if use_fft else L
    cdef double* buf = <double*> malloc((2 * (N + head) + 2 * nt + 4 * N + N) * sizeof(double))
    cdef Py_ssize_t* rev = <Py_ssize_t*> malloc(N * sizeof(Py_ssize_t))
    if buf == NULL or rev == NULL:
        free(buf)
        free(rev)
        raise MemoryError()
    cdef double* er = buf
    cdef double* ei = er + (N + head)
    cdef double* tr = ei + (N + head)
    cdef double* ti = tr + nt
    cdef double* wre = ti + nt
    cdef double* wim = wre + N
    cdef double* yr = wim + N
    cdef double* yi = yr + N
    cdef double* twr = yi + N
    cdef double* twi = twr + N // 2
    try:
        if use_fft:
            bits = 0
            while (1 << bits) < N:
                bits += 1
            for n in range(N):
                k = 0
                for l in range(bits):
                    if n & (1 << l):
                        k |= 1 << (bits - 1 - l)
                rev[n] = k
            for k in range(N // 2):
                twr[k] = cos(2.0 * M_PI * k / N)
                twi[k] = -sin(2.0 * M_PI * k / N)
            for n in range(N):
                tr[n] = 0.0
                ti[n] = 0.0
            for l in range(L):
                tr[l] = beta[l].real
                ti[l] = beta[l].imag
            _fft(tr, ti, N, rev, twr, twi, False)
        else:
            for l in range(L):
                # reversed: u_n = sum_j tr[j] * ext[n + j]
                tr[head - l] = beta[l].real
                ti[head - l] = beta[l].imag
        with nogil:
            for b in range(B):
                for n in range(N):
                    er[head + n] = x[b, n].real
                    ei[head + n] = x[b, n].imag
                for s in range(n_stages):
                    if use_fft:
                        _fft_stage(er + head, ei + head, tr, ti, wre, wim, N, rev, twr, twi,
                                   gain, lr, li, literal, b0r, b0i, yr, yi)
                    else:
                        memcpy(er, er + N, head * sizeof(double))
                        memcpy(ei, ei + N, head * sizeof(double))
                        _fir_stage(er, ei, tr, ti, N, L, gain, lr, li, literal, b0r, b0i, yr, yi)
                    for n in range(N):
                        o[s, b, n, 0] = yr[n]
                        o[s, b, n, 1] = yi[n]
                    memcpy(er + head, yr, N * sizeof(double))
                    memcpy(ei + head, yi, N * sizeof(double))
    finally:
        free(buf)
        free(rev)
    return out
