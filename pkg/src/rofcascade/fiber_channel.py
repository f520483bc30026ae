"""Per-unit-length fiber frequency response: build, ingest, export, cascade.

Frequencies are baseband offsets ``f_k = (k - K//2) * B / K`` so that a
delay grid in nanoseconds stays meaningful at a 1 GHz bandwidth. The
absolute frequency of bin ``k`` is ``f0 + f_k``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._csvio import FormatError, fmt, read_rows


class ChannelError(FormatError):
    """Raised for malformed channel inputs (tables, files, grids)."""


@dataclass(frozen=True)
class FrequencyGrid:
    f0: float = 140e9
    bandwidth: float = 1e9
    K: int = 64

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ChannelError(f"K must be an integer >= 2, got {self.K}")
        if not self.bandwidth > 0:
            raise ChannelError("bandwidth must be positive")
        object.__setattr__(self, "K", int(self.K))

    @property
    def spacing(self) -> float:
        return self.bandwidth / self.K

    @property
    def Ts(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def offset(self) -> int:
        """Index of the zero-frequency bin."""
        return self.K // 2

    @property
    def f(self) -> np.ndarray:
        return (np.arange(self.K) - self.offset) * self.spacing

    @property
    def absolute(self) -> np.ndarray:
        return self.f0 + self.f

    def check_same(self, other: "FrequencyGrid") -> None:
        if self != other:
            raise ChannelError(f"frequency grid mismatch: {self} vs {other}")


def forward_transform(h: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    """H_k = sum_n h_n exp(-j 2 pi f_k n Ts) for a tap sequence of any length.

    The kernel is K-periodic in n, so longer sequences alias onto K taps
    (a linear convolution tail folds into the circular one).
    """
    h = np.asarray(h, dtype=complex)
    K, m = grid.K, grid.offset
    n = np.arange(h.size)
    folded = np.zeros(K, dtype=complex)
    np.add.at(folded, n % K, h)
    return np.fft.fft(folded * np.exp(2j * np.pi * m * np.arange(K) / K))


def inverse_transform(H: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    """All K taps h_n = (1/K) sum_k H_k exp(+j 2 pi f_k n Ts)."""
    K, m = grid.K, grid.offset
    return np.fft.ifft(np.asarray(H, dtype=complex)) * np.exp(-2j * np.pi * m * np.arange(K) / K)


@dataclass(frozen=True)
class UnitFiberResponse:
    grid: FrequencyGrid
    H: np.ndarray = field(repr=False)

    def __post_init__(self):
        H = np.array(self.H, dtype=complex)
        if H.shape != (self.grid.K,):
            raise ChannelError(f"H must have shape ({self.grid.K},), got {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ChannelError("H contains non-finite entries")
        if np.any(np.abs(H) == 0):
            raise ChannelError("H has a zero-magnitude bin")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.H)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.H)


@dataclass(frozen=True)
class MeasurementTable:
    """Rows of (frequency Hz, magnitude dB, group delay s)."""

    frequency: np.ndarray
    mag_db: np.ndarray
    group_delay: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(c, dtype=float) for c in (self.frequency, self.mag_db, self.group_delay)]
        if len({c.shape for c in cols}) != 1 or cols[0].ndim != 1:
            raise ChannelError("measurement columns must be 1-D and equally long")
        if cols[0].size < 8:
            raise ChannelError(f"measurement table needs >= 8 rows, got {cols[0].size}")
        if not np.all(np.diff(cols[0]) > 0):
            raise ChannelError("measurement frequencies must be strictly increasing")
        if not all(np.all(np.isfinite(c)) for c in cols):
            raise ChannelError("measurement table contains non-finite values")
        for name, c in zip(("frequency", "mag_db", "group_delay"), cols):
            c.setflags(write=False)
            object.__setattr__(self, name, c)

    def __len__(self):
        return self.frequency.size


@dataclass(frozen=True)
class SyntheticFiberParams:
    # Defaults are stand-ins for the unpublished D-band measurement; only the
    # 2.4 dB worst-case attenuation is anchored to the reported channel.
    atten_low: float = 1.4
    atten_high: float = 2.4
    mean_group_delay: float = 5e-9
    group_delay_slope: float = 0.5e-18  # 0.5 ns/GHz

    def __post_init__(self):
        if self.atten_low < 0 or self.atten_high < 0:
            raise ChannelError("attenuations must be >= 0 dB")
        if not self.mean_group_delay > 0:
            raise ChannelError("mean group delay must be positive")


@dataclass(frozen=True)
class ImpulseTaps:
    beta: np.ndarray = field(repr=False)
    Ts: float
    eps_trunc: float = 0.0

    def __post_init__(self):
        beta = np.array(self.beta, dtype=complex)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("need at least one tap")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def L(self) -> int:
        return self.beta.size


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; windows shrink symmetrically at the edges."""
    x = np.asarray(x, dtype=float)
    if window < 1 or window % 2 == 0:
        raise ChannelError(f"smoothing window must be a positive odd integer, got {window}")
    if window > x.size:
        raise ChannelError(f"smoothing window {window} exceeds row count {x.size}")
    idx = np.arange(x.size)
    reach = np.minimum(np.minimum(idx, x.size - 1 - idx), window // 2)
    acc = x.copy()
    for d in range(1, window // 2 + 1):
        inside = reach >= d
        acc[inside] += x[idx[inside] - d] + x[idx[inside] + d]
    return acc / (2 * reach + 1)


def integrate_group_delay(group_delay: np.ndarray, spacing: float) -> np.ndarray:
    """Phase from group delay via cumulative trapezoid, phi_0 = 0.

    Sign convention: tau_g = -(1/2pi) dphi/df.
    """
    gd = np.asarray(group_delay, dtype=float)
    steps = 0.5 * (gd[1:] + gd[:-1]) * spacing
    return -2.0 * np.pi * np.concatenate(([0.0], np.cumsum(steps)))


def _assemble(grid: FrequencyGrid, mag_db: np.ndarray, group_delay: np.ndarray) -> UnitFiberResponse:
    alpha = 10.0 ** (np.asarray(mag_db) / 20.0)
    phi = integrate_group_delay(group_delay, grid.spacing)
    return UnitFiberResponse(grid, alpha * np.exp(1j * phi))


def ingest_measurement(table: MeasurementTable, grid: FrequencyGrid, smooth_window: int = 9) -> UnitFiberResponse:
    """Smooth a measured magnitude/group-delay table and map it onto ``grid``."""
    fabs = grid.absolute
    if fabs[0] < table.frequency[0] or fabs[-1] > table.frequency[-1]:
        raise ChannelError(
            f"table covers [{table.frequency[0]:.6g}, {table.frequency[-1]:.6g}] Hz, "
            f"grid needs [{fabs[0]:.6g}, {fabs[-1]:.6g}] Hz"
        )
    mag = np.interp(fabs, table.frequency, moving_average(table.mag_db, smooth_window))
    gd = np.interp(fabs, table.frequency, moving_average(table.group_delay, smooth_window))
    return _assemble(grid, mag, gd)


def synth_channel(params: SyntheticFiberParams = SyntheticFiberParams(),
                  grid: FrequencyGrid = FrequencyGrid()) -> UnitFiberResponse:
    """Synthetic dispersive fiber: linear dB roll-off and linear group delay."""
    mag_db = -np.linspace(params.atten_low, params.atten_high, grid.K)
    f = grid.f
    mid = 0.5 * (f[0] + f[-1])
    gd = params.mean_group_delay + params.group_delay_slope * (f - mid)
    return _assemble(grid, mag_db, gd)


def synth_table(params: SyntheticFiberParams, grid: FrequencyGrid, margin: int = 8,
                ripple_db: float = 0.0, ripple_gd: float = 0.0, seed: int = 0) -> MeasurementTable:
    """Measurement-like table on the grid spacing, extending ``margin`` rows past each edge.

    Optional ripple models measurement impairments for exercising the smoother.
    """
    k = np.arange(-margin, grid.K + margin)
    f = (k - grid.offset) * grid.spacing
    span = grid.f[-1] - grid.f[0]
    frac = (f - grid.f[0]) / span
    mag_db = -(params.atten_low + (params.atten_high - params.atten_low) * frac)
    mid = 0.5 * (grid.f[0] + grid.f[-1])
    gd = params.mean_group_delay + params.group_delay_slope * (f - mid)
    rng = np.random.default_rng(seed)
    mag_db = mag_db + ripple_db * rng.standard_normal(f.size)
    gd = gd + ripple_gd * rng.standard_normal(f.size)
    return MeasurementTable(grid.f0 + f, mag_db, gd)


def cascade_response(H: UnitFiberResponse | np.ndarray, r: int) -> np.ndarray:
    """Elementwise H_k**r, the response of r unit-length segments."""
    if r < 0:
        raise ValueError(f"hop count must be >= 0, got {r}")
    h = H.H if isinstance(H, UnitFiberResponse) else np.asarray(H, dtype=complex)
    return h ** int(r)


def impulse_taps(H: UnitFiberResponse, energy_fraction: float = 1.0) -> ImpulseTaps:
    """Shortest tap prefix carrying ``energy_fraction`` of the impulse-response energy.

    With ``energy_fraction == 1`` only trailing round-off-level taps are dropped.
    """
    if not 0 < energy_fraction <= 1:
        raise ValueError("energy_fraction must be in (0, 1]")
    beta = inverse_transform(H.H, H.grid)
    power = np.abs(beta) ** 2
    total = power.sum()
    if energy_fraction == 1.0:
        significant = np.nonzero(np.abs(beta) > 1e-14 * np.abs(beta).max())[0]
        L = int(significant[-1]) + 1
    else:
        L = int(np.searchsorted(np.cumsum(power), energy_fraction * total)) + 1
        L = min(L, beta.size)
    return ImpulseTaps(beta[:L].copy(), H.grid.Ts, 1.0 - energy_fraction)


def assemble_taps(taps: ImpulseTaps, grid: FrequencyGrid) -> np.ndarray:
    """Forward transform of a tap set back onto the grid."""
    return forward_transform(taps.beta, grid)


def write_channel_csv(H: UnitFiberResponse, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "re", "im"])
        for f, h in zip(H.grid.absolute, H.H):
            w.writerow([fmt(f), fmt(h.real), fmt(h.imag)])


def read_channel_csv(path: str | Path) -> UnitFiberResponse:
    """Load a ``freq_hz,re,im`` channel file; the grid is recovered from the frequencies."""
    data = read_rows(path, ["freq_hz", "re", "im"])
    K = data.shape[0]
    if K < 2:
        raise ChannelError(f"{path}: need at least 2 rows")
    freq = data[:, 0]
    if not np.all(np.diff(freq) > 0):
        raise ChannelError(f"{path}: frequencies must be strictly increasing")
    spacing = (freq[-1] - freq[0]) / (K - 1)
    bandwidth = float(np.round(spacing * K, 3))
    grid = FrequencyGrid(f0=float(freq[K // 2]), bandwidth=bandwidth, K=K)
    if not np.allclose(grid.absolute, freq, rtol=0, atol=1e-6 * spacing):
        raise ChannelError(f"{path}: frequencies are not uniformly spaced")
    return UnitFiberResponse(grid, data[:, 1] + 1j * data[:, 2])


def write_measurement_csv(table: MeasurementTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "mag_db", "group_delay_s"])
        for row in zip(table.frequency, table.mag_db, table.group_delay):
            w.writerow([fmt(v) for v in row])


def read_measurement_csv(path: str | Path) -> MeasurementTable:
    data = read_rows(path, ["freq_hz", "mag_db", "group_delay_s"])
    return MeasurementTable(data[:, 0], data[:, 1], data[:, 2])
