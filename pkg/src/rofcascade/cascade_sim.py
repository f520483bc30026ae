"""Uplink propagation through r cascaded RU stages (fiber segment + PA).

Noise variance is referenced to a frequency bin. Time-domain draws use
``noise_var / K`` per sample, which maps to ``noise_var`` per bin under the
``to_time``/``to_freq`` pair, so the linear and non-linear propagators see
the same noise statistics.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .fiber_channel import ImpulseTaps, UnitFiberResponse, cascade_response, impulse_taps
from .signal_model import Frame, PilotSequence, WirelessFrontEnd, apply_front_end

LAMBDA_1 = -(4 / 27) * np.exp(0.2j)
LAMBDA_2 = -(8 / 27) * np.exp(0.2j)


def db_to_amplitude(db: float) -> float:
    return float(10.0 ** (db / 20.0))


@dataclass(frozen=True)
class AmplifierModel:
    """Memoryless cubic PA ``G (x + lam x |x|^2)``; ``G`` is an amplitude gain."""

    G: float
    lam: complex = 0j

    def __post_init__(self):
        if not self.G > 0:
            raise ValueError(f"PA gain must be positive, got {self.G}")
        if not np.isfinite(complex(self.lam)):
            raise ValueError("non-linearity factor must be finite")
        object.__setattr__(self, "lam", complex(self.lam))

    @classmethod
    def from_db(cls, gain_db: float, lam: complex = 0j) -> "AmplifierModel":
        return cls(db_to_amplitude(gain_db), lam)

    @property
    def is_linear(self) -> bool:
        return self.lam == 0


class NoiseMode(str, enum.Enum):
    PER_STAGE = "per_stage"
    AGGREGATE = "aggregate_at_cu"


class Boundary(str, enum.Enum):
    CIRCULAR = "circular"
    LINEAR = "linear"


@dataclass(frozen=True)
class CascadeConfig:
    """Cascade topology and impairments.

    ``literal_stage`` evaluates the non-linear term of each stage without the
    l = 0 tap. ``boundary`` selects circular FIR (default) or linear
    convolution with the tail kept and folded onto K samples at the CU.
    """

    M: int
    unit: UnitFiberResponse = field(repr=False)
    pa: AmplifierModel
    noise_var: float = 0.0
    noise_mode: NoiseMode = NoiseMode.PER_STAGE
    seed: int = 0
    literal_stage: bool = False
    boundary: Boundary = Boundary.CIRCULAR
    energy_fraction: float = 1.0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("cascade needs at least one RU")
        if self.noise_var < 0:
            raise ValueError("noise variance must be >= 0")
        object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @cached_property
    def taps(self) -> ImpulseTaps:
        return impulse_taps(self.unit, self.energy_fraction)

    @property
    def grid(self):
        return self.unit.grid

    def check_hops(self, r: int) -> None:
        if not 1 <= r <= self.M:
            raise ValueError(f"hop count r={r} outside 1..{self.M}")


def add_awgn(x: np.ndarray, var: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise of total variance ``var``."""
    if var < 0:
        raise ValueError(f"noise variance must be >= 0, got {var}")
    x = np.asarray(x, dtype=complex)
    if var == 0:
        return x.copy()
    w = rng.standard_normal(x.shape + (2,)) @ np.array([1.0, 1j])
    return x + np.sqrt(var / 2.0) * w


def pa_apply(x, pa: AmplifierModel):
    x = np.asarray(x, dtype=complex)
    return pa.G * (x + pa.lam * x * (x.real ** 2 + x.imag ** 2))


def stage_function(x: np.ndarray, taps: ImpulseTaps, pa: AmplifierModel,
                   literal: bool = False, boundary: Boundary | str = Boundary.CIRCULAR) -> np.ndarray:
    """One repeater stage: fiber FIR then the PA.

    The FIR output is computed once and fed to both the linear and cubic
    terms. ``literal=True`` drops the l = 0 tap from the cubic term only.
    """
    x = np.asarray(x, dtype=complex)
    beta = taps.beta
    if Boundary(boundary) is Boundary.CIRCULAR:
        return kernels.cascade_stages(x[None, :], beta, pa.G, pa.lam, 1, literal)[0, 0]
    u = np.convolve(x, beta)
    v = u.copy()
    if literal:
        v[: x.size] -= beta[0] * x
    return pa.G * (u + pa.lam * v * (v.real ** 2 + v.imag ** 2))


def propagate_linear(x0: Frame, r: int, cfg: CascadeConfig,
                     rng: np.random.Generator | None = None) -> Frame:
    """Frequency-domain cascade: G^{r+1} H^r x0 plus noise."""
    cfg.check_hops(r)
    cfg.grid.check_same(x0.grid)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    G, H = cfg.pa.G, cfg.unit.H
    if cfg.noise_mode is NoiseMode.AGGREGATE or cfg.noise_var == 0:
        y = G ** (r + 1) * cascade_response(H, r) * x0.freq
        return Frame(x0.grid, add_awgn(y, cfg.noise_var, rng))
    y = add_awgn(G * x0.freq, cfg.noise_var, rng)
    for _ in range(r):
        y = add_awgn(G * H * y, cfg.noise_var, rng)
    return Frame(x0.grid, y)


def propagate_nonlinear(x0: Frame, r: int, cfg: CascadeConfig,
                        rng: np.random.Generator | None = None) -> Frame:
    """Time-domain cascade: entry PA, then r fiber+PA stages."""
    cfg.check_hops(r)
    cfg.grid.check_same(x0.grid)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    K = cfg.grid.K
    var_t = cfg.noise_var / K
    per_stage = cfg.noise_mode is NoiseMode.PER_STAGE and var_t > 0
    x = pa_apply(x0.time, cfg.pa)
    if per_stage:
        x = add_awgn(x, var_t, rng)
    if cfg.boundary is Boundary.CIRCULAR and not per_stage:
        x = kernels.cascade_stages(x[None, :], cfg.taps.beta, cfg.pa.G, cfg.pa.lam, r,
                                   cfg.literal_stage)[-1, 0]
    else:
        for _ in range(r):
            x = stage_function(x, cfg.taps, cfg.pa, cfg.literal_stage, cfg.boundary)
            if per_stage:
                x = add_awgn(x, var_t, rng)
    if x.size > K:
        folded = np.zeros(K, dtype=complex)
        np.add.at(folded, np.arange(x.size) % K, x)
        x = folded
    if not per_stage:
        x = add_awgn(x, var_t, rng)
    return Frame.from_time(cfg.grid, x)


@dataclass(frozen=True)
class UplinkScene:
    """Ground truth for one capture: front end (A, tau), hop count r, cascade."""

    A: complex
    tau: float
    r: int
    cascade: CascadeConfig

    def __post_init__(self):
        self.cascade.check_hops(self.r)

    @property
    def front_end(self) -> WirelessFrontEnd:
        return WirelessFrontEnd(self.A, self.tau)

    def receive(self, pilot: PilotSequence, nonlinear: bool | None = None,
                rng: np.random.Generator | None = None) -> Frame:
        """CU frame; the regime follows the PA unless ``nonlinear`` is given."""
        x0 = apply_front_end(pilot, self.front_end, self.cascade.grid)
        if nonlinear is None:
            nonlinear = not self.cascade.pa.is_linear
        propagate = propagate_nonlinear if nonlinear else propagate_linear
        return propagate(x0, self.r, self.cascade, rng)


__all__ = [
    "LAMBDA_1", "LAMBDA_2", "AmplifierModel", "Boundary", "CascadeConfig", "NoiseMode",
    "UplinkScene", "add_awgn", "db_to_amplitude", "pa_apply", "propagate_linear",
    "propagate_nonlinear", "stage_function",
]
