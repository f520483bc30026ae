"""Numpy implementation of the cascade kernel (FFT-based circular FIR)."""

import numpy as np


def cascade_stages(x, beta, gain, lam, n_stages, literal=False):
    x = np.ascontiguousarray(x, dtype=np.complex128)
    beta = np.asarray(beta, dtype=np.complex128)
    B, N = x.shape
    if beta.size > N:
        raise ValueError("tap count exceeds frame length")
    out = np.empty((n_stages, B, N), dtype=np.complex128)
    taps_f = np.fft.fft(beta, N)
    cur = x
    for s in range(n_stages):
        u = np.fft.ifft(np.fft.fft(cur, axis=-1) * taps_f, axis=-1)
        v = u - beta[0] * cur if literal else u
        out[s] = gain * (u + lam * v * (v.real ** 2 + v.imag ** 2))
        cur = out[s]
    return out
