"""Pilot generation, wireless front end (gain A, delay tau), and the
frequency/time transform pair used by every frame."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._csvio import fmt, read_rows
from .fiber_channel import ChannelError, FrequencyGrid

QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2)


def _modulation(grid_or_K, sign):
    K = grid_or_K if isinstance(grid_or_K, int) else grid_or_K.K
    m = K // 2
    return np.exp(sign * 2j * np.pi * m * np.arange(K) / K)


def to_time(freq: np.ndarray) -> np.ndarray:
    """x_n = (1/K) sum_k X_k exp(+j 2 pi f_k n Ts) with N = K.

    Works on the last axis, so a batch of frames can be converted at once.
    """
    freq = np.asarray(freq, dtype=complex)
    return np.fft.ifft(freq, axis=-1) * _modulation(freq.shape[-1], -1)


def to_freq(samples: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_time`."""
    samples = np.asarray(samples, dtype=complex)
    return np.fft.fft(samples * _modulation(samples.shape[-1], +1), axis=-1)


@dataclass(frozen=True)
class PilotSequence:
    s: np.ndarray = field(repr=False)
    seed: int

    @property
    def K(self) -> int:
        return self.s.size


def generate_pilot(K: int, seed: int) -> PilotSequence:
    """Unit-modulus QPSK pilot drawn uniformly from the four symbols."""
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    rng = np.random.default_rng(seed)
    s = QPSK[rng.integers(0, 4, size=K)]
    s.setflags(write=False)
    return PilotSequence(s, seed)


@dataclass(frozen=True)
class WirelessFrontEnd:
    A: complex
    tau: float

    def __post_init__(self):
        if not abs(self.A) > 0:
            raise ValueError("front-end gain A must be nonzero")
        if not np.isfinite(self.tau):
            raise ValueError("delay must be finite")


@dataclass(frozen=True)
class Frame:
    grid: FrequencyGrid
    freq: np.ndarray = field(repr=False)

    def __post_init__(self):
        freq = np.array(self.freq, dtype=complex)
        if freq.shape != (self.grid.K,):
            raise ChannelError(f"frame length {freq.shape} does not match K={self.grid.K}")
        freq.setflags(write=False)
        object.__setattr__(self, "freq", freq)

    @property
    def time(self) -> np.ndarray:
        return to_time(self.freq)

    @classmethod
    def from_time(cls, grid: FrequencyGrid, samples: np.ndarray) -> "Frame":
        samples = np.asarray(samples)
        if samples.shape != (grid.K,):
            raise ChannelError(f"expected {grid.K} time samples, got {samples.shape}")
        return cls(grid, to_freq(samples))


def delay_phasor(grid: FrequencyGrid, tau) -> np.ndarray:
    """exp(-j 2 pi f_k tau); a vector of delays yields one row per delay."""
    return np.exp(-2j * np.pi * np.multiply.outer(np.asarray(tau, dtype=float), grid.f))


def apply_front_end(s: PilotSequence, fe: WirelessFrontEnd, grid: FrequencyGrid) -> Frame:
    if s.K != grid.K:
        raise ChannelError(f"pilot length {s.K} does not match K={grid.K}")
    return Frame(grid, fe.A * delay_phasor(grid, fe.tau) * s.s)


def write_frame_csv(frame: Frame, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "re", "im"])
        for k, x in enumerate(frame.freq):
            w.writerow([k, fmt(x.real), fmt(x.imag)])


def read_frame_csv(path: str | Path, grid: FrequencyGrid) -> Frame:
    data = read_rows(path, ["k", "re", "im"])
    if data.shape[0] != grid.K or not np.array_equal(data[:, 0], np.arange(grid.K)):
        raise ChannelError(f"{path}: expected rows k = 0..{grid.K - 1}")
    return Frame(grid, data[:, 1] + 1j * data[:, 2])
