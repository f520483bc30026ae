"""Hop count / delay / gain estimators.

Linear regime: A is eliminated in closed form and (r, tau) found by a 2-D
grid search over the projection residual, evaluated in the frequency domain.

Non-linear regime: the cost is the squared time-domain residual between the
received frame and the noiseless cascade output for a candidate
(A, tau, r). Coordinate descent cycles tau -> |A| -> angle(A) -> r over the
grids; ``exhaustive_oracle`` scans the full Cartesian product.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from ._csvio import fmt
from .cascade_sim import AmplifierModel, CascadeConfig
from .fiber_channel import FrequencyGrid, ImpulseTaps, UnitFiberResponse, impulse_taps
from .signal_model import Frame, PilotSequence, delay_phasor, to_time

NS = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("grids must be non-empty 1-D sequences")
    a.setflags(write=False)
    return a


def _ints(values) -> tuple[int, ...]:
    out = tuple(sorted(int(v) for v in values))
    if not out or out[0] < 1:
        raise ValueError("hop-count candidates must be a non-empty set of integers >= 1")
    return out


@dataclass(frozen=True)
class LinearGridSpec:
    r_candidates: Sequence[int] = (1, 2, 3, 4, 5)
    tau_grid: np.ndarray = field(default_factory=lambda: np.arange(101) * 0.1 * NS)

    def __post_init__(self):
        object.__setattr__(self, "r_candidates", _ints(self.r_candidates))
        object.__setattr__(self, "tau_grid", _frozen(np.sort(self.tau_grid)))


@dataclass(frozen=True)
class NonlinearGridSpec:
    tau_grid: np.ndarray = field(default_factory=lambda: np.arange(1, 11) * NS)
    amp_grid: np.ndarray = field(default_factory=lambda: np.arange(1, 11) * 0.1)
    phase_grid: np.ndarray = field(
        default_factory=lambda: np.linspace(-np.pi, np.pi, 32, endpoint=False))
    r_candidates: Sequence[int] = (1, 2, 3, 4, 5)
    threshold: float = 1e-10
    max_sweeps: int = 20

    def __post_init__(self):
        for name in ("tau_grid", "amp_grid", "phase_grid"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "r_candidates", _ints(self.r_candidates))
        if not self.threshold > 0:
            raise ValueError("cost threshold must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if np.any(self.amp_grid <= 0):
            raise ValueError("amplitude grid must be positive")

    @property
    def size(self) -> int:
        return (self.tau_grid.size * self.amp_grid.size * self.phase_grid.size
                * len(self.r_candidates))


@dataclass(frozen=True)
class EstimationResult:
    r_hat: int
    tau_hat: float
    A_hat: complex
    cost: float
    sweeps: int = 1
    converged: bool = True
    ambiguous: bool = False
    history: tuple = ()

    def as_row(self, trial: int, r_true: int | None) -> list:
        return [trial, "" if r_true is None else r_true, self.r_hat, fmt(self.tau_hat),
                fmt(self.A_hat.real), fmt(self.A_hat.imag), fmt(self.cost), self.sweeps,
                int(self.converged)]


RESULT_HEADER = ["trial", "r_true", "r_hat", "tau_hat_s", "a_hat_re", "a_hat_im", "cost",
                 "sweeps", "converged"]


def write_results_csv(rows, path, prefix_header: Sequence[str] = ()) -> None:
    """Write ``as_row`` lists; ``prefix_header`` names any leading extra columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(prefix_header) + RESULT_HEADER)
        w.writerows(rows)


# -- linear regime -----------------------------------------------------------

def model_vector(r: int, tau: float, s: PilotSequence | np.ndarray, H: UnitFiberResponse,
                 G: float) -> np.ndarray:
    """g_k = G^{r+1} exp(-j 2 pi f_k tau) H_k^r s_k."""
    if r < 1:
        raise ValueError("hop count must be >= 1")
    s = s.s if isinstance(s, PilotSequence) else np.asarray(s)
    return G ** (r + 1) * delay_phasor(H.grid, tau) * H.H ** r * s


def closed_form_A(g: np.ndarray, x: np.ndarray) -> complex:
    """Least-squares gain g^H x / ||g||^2."""
    g = np.asarray(g)
    norm2 = np.vdot(g, g).real
    if norm2 == 0:
        raise ValueError("model vector is identically zero")
    return complex(np.vdot(g, np.asarray(x)) / norm2)


def projection_residual(g: np.ndarray, x: np.ndarray) -> float:
    """||x - g (g^H g)^{-1} g^H x||^2 evaluated literally."""
    g = np.asarray(g)
    return float(np.linalg.norm(x - g * closed_form_A(g, x)) ** 2)


def linear_residual_surface(x: np.ndarray, spec: LinearGridSpec, s: PilotSequence,
                            H: UnitFiberResponse, G: float):
    """Residual ||x||^2 - |g^H x|^2 / ||g||^2 and g^H x / ||g||^2 on the (r, tau) grid."""
    r = np.array(spec.r_candidates)
    base = H.H[None, :] ** r[:, None] * s.s[None, :]
    gain = G ** (r + 1.0)
    # sum_k conj(g_k) x_k with g = gain * base * exp(-j 2 pi f tau)
    gx = gain[:, None] * ((np.conj(base) * x) @ delay_phasor(H.grid, spec.tau_grid).conj().T)
    gnorm2 = gain ** 2 * np.sum(np.abs(base) ** 2, axis=1)
    resid = np.vdot(x, x).real - np.abs(gx) ** 2 / gnorm2[:, None]
    return resid, gx / gnorm2[:, None]


def linear_nls(x: Frame, spec: LinearGridSpec, s: PilotSequence, H: UnitFiberResponse,
               G: float, tie_rtol: float = 1e-9) -> EstimationResult:
    """2-D grid search over (r, tau); ties go to the smallest r, then smallest tau.

    ``ambiguous`` is set when another hop count reaches the minimum residual
    within ``tie_rtol * ||x||^2``.
    """
    H.grid.check_same(x.grid)
    xf = x.freq
    energy = np.vdot(xf, xf).real
    if energy == 0:
        raise ValueError("received frame is identically zero")
    resid, A = linear_residual_surface(xf, spec, s, H, G)
    ir, it = np.unravel_index(np.argmin(resid), resid.shape)
    best = resid[ir, it]
    per_r = resid.min(axis=1)
    ambiguous = bool(np.sum(per_r - best <= tie_rtol * energy) > 1)
    return EstimationResult(
        r_hat=spec.r_candidates[ir], tau_hat=float(spec.tau_grid[it]), A_hat=complex(A[ir, it]),
        cost=float(max(best, 0.0)), ambiguous=ambiguous)


# -- non-linear regime -------------------------------------------------------

class CascadeContext:
    """Everything the receiver knows: grid, pilot, unit fiber response, PA model."""

    def __init__(self, pilot: PilotSequence, unit: UnitFiberResponse, pa: AmplifierModel,
                 taps: ImpulseTaps | None = None, literal: bool = False):
        if pilot.K != unit.grid.K:
            raise ValueError("pilot length does not match the frequency grid")
        self.pilot = pilot
        self.unit = unit
        self.pa = pa
        self.taps = impulse_taps(unit) if taps is None else taps
        self.literal = literal
        self._basis = {}

    @classmethod
    def from_config(cls, cfg: CascadeConfig, pilot: PilotSequence) -> "CascadeContext":
        return cls(pilot, cfg.unit, cfg.pa, cfg.taps, cfg.literal_stage)

    @property
    def grid(self) -> FrequencyGrid:
        return self.unit.grid

    def delayed_pilot(self, tau: np.ndarray) -> np.ndarray:
        """Time view of exp(-j 2 pi f tau) s, one row per entry of ``tau``."""
        uniq, inverse = np.unique(np.atleast_1d(np.asarray(tau, dtype=float)), return_inverse=True)
        key = uniq.tobytes()
        basis = self._basis.get(key)
        if basis is None:
            basis = to_time(delay_phasor(self.grid, uniq) * self.pilot.s)
            if len(self._basis) < 256:
                self._basis[key] = basis
        return basis[inverse]

    def stage_outputs(self, A: np.ndarray, tau: np.ndarray, r_max: int) -> np.ndarray:
        """Noiseless CU signals after 1..r_max stages, shape (r_max, B, N)."""
        A = np.atleast_1d(np.asarray(A, dtype=complex))
        x0 = A[:, None] * self.delayed_pilot(tau)
        x1 = self.pa.G * (x0 + self.pa.lam * x0 * (x0.real ** 2 + x0.imag ** 2))
        return kernels.cascade_stages(np.ascontiguousarray(x1), self.taps.beta, self.pa.G,
                                      self.pa.lam, r_max, self.literal)

    def costs(self, x_time: np.ndarray, A, tau, r_values: Sequence[int]) -> np.ndarray:
        """Residuals for every candidate (A_b, tau_b) and every r; shape (len(r_values), B)."""
        r_values = list(r_values)
        # far-off candidates can diverge through repeated cubic stages
        with np.errstate(over="ignore", invalid="ignore"):
            out = self.stage_outputs(A, tau, max(r_values))
            d = out[np.array(r_values) - 1] - x_time
            c = np.sum(d.real ** 2 + d.imag ** 2, axis=-1)
        c[~np.isfinite(c)] = np.inf
        return c


def nonlinear_cost(A: complex, tau: float, r: int, x: Frame, ctx: CascadeContext) -> float:
    """||x - f^r(G(x0 + lam x0 |x0|^2))||^2 in the time domain."""
    if r < 1:
        raise ValueError("hop count must be >= 1")
    return float(ctx.costs(x.time, [A], [tau], [r])[0, 0])


def _nearest(grid: np.ndarray, value: float) -> int:
    return int(np.argmin(np.abs(grid - value)))


def _nearest_phase(grid: np.ndarray, value: float) -> int:
    return int(np.argmin(np.abs(np.angle(np.exp(1j * (grid - value))))))


def _snap(spec: NonlinearGridSpec, r: int, tau: float, A: complex) -> list[int]:
    return [_nearest(spec.tau_grid, tau), _nearest(spec.amp_grid, abs(A)),
            _nearest_phase(spec.phase_grid, np.angle(A)),
            _nearest(np.array(spec.r_candidates, dtype=float), r)]


def _point(spec: NonlinearGridSpec, idx) -> tuple[float, complex, int]:
    it, ia, ip, ir = idx
    A = spec.amp_grid[ia] * np.exp(1j * spec.phase_grid[ip])
    return float(spec.tau_grid[it]), complex(A), spec.r_candidates[ir]


def _descend(xt: np.ndarray, spec: NonlinearGridSpec, ctx: CascadeContext,
             idx: list[int]) -> EstimationResult:
    taus, amps, phases, rs = spec.tau_grid, spec.amp_grid, spec.phase_grid, spec.r_candidates

    def evaluate(coord):
        it, ia, ip, ir = idx
        if coord == 0:
            A = np.full(taus.size, amps[ia] * np.exp(1j * phases[ip]))
            return ctx.costs(xt, A, taus, [rs[ir]])[0]
        if coord == 1:
            return ctx.costs(xt, amps * np.exp(1j * phases[ip]), [taus[it]] * amps.size, [rs[ir]])[0]
        if coord == 2:
            return ctx.costs(xt, amps[ia] * np.exp(1j * phases), [taus[it]] * phases.size, [rs[ir]])[0]
        return ctx.costs(xt, [amps[ia] * np.exp(1j * phases[ip])], [taus[it]], rs)[:, 0]

    tau0, A0, r0 = _point(spec, idx)
    cost = float(ctx.costs(xt, [A0], [tau0], [r0])[0, 0])
    history = [cost]
    sweeps, converged = 0, False
    while sweeps < spec.max_sweeps:
        sweeps += 1
        moved = False
        for coord in range(4):
            c = evaluate(coord)
            j = int(np.argmin(c))
            if c[j] < cost:
                idx[coord] = j
                cost = float(c[j])
                moved = True
            history.append(cost)
        if cost <= spec.threshold or not moved:
            converged = True
            break
    tau, A, r = _point(spec, idx)
    return EstimationResult(r_hat=r, tau_hat=tau, A_hat=A, cost=cost, sweeps=sweeps,
                            converged=converged, history=tuple(history))


INIT_MODES = ("per_r", "linear", "grid")


def coordinate_descent(x: Frame, spec: NonlinearGridSpec, ctx: CascadeContext,
                       init: str | tuple = "per_r") -> EstimationResult:
    """Cyclic coordinate descent over the grids in the order tau, |A|, angle(A), r.

    Each coordinate moves only on strict improvement, so the cost never
    increases. A run stops when the cost is at most ``spec.threshold`` or a
    full sweep changes nothing (``converged=True``), or after
    ``spec.max_sweeps`` sweeps (``converged=False``).

    Starting points, all snapped to the grids:

    ``"per_r"``
        one run per hop-count candidate, started from the linear-regime
        residual minimum (tau and closed-form A) for that r; the lowest-cost
        run is returned. Hop count and delay trade off along a ridge
        (one extra hop ~ one unit of fiber group delay), which single
        coordinate moves cannot cross, so one start per r is needed.
    ``"linear"``
        a single run from the global linear-regime estimate.
    ``"grid"``
        a single run from the first point of every grid.
    ``(r, tau, A)``
        a single run from the given point.
    """
    ctx.grid.check_same(x.grid)
    xt = x.time
    if not isinstance(init, str):
        return _descend(xt, spec, ctx, _snap(spec, *init))
    if init == "grid":
        return _descend(xt, spec, ctx, [0, 0, 0, 0])
    if init not in INIT_MODES:
        raise ValueError(f"unknown init mode {init!r}")
    lin_spec = LinearGridSpec(spec.r_candidates, spec.tau_grid)
    resid, A_lin = linear_residual_surface(x.freq, lin_spec, ctx.pilot, ctx.unit, ctx.pa.G)
    if init == "linear":
        ir, it = np.unravel_index(np.argmin(resid), resid.shape)
        return _descend(xt, spec, ctx, _snap(spec, spec.r_candidates[ir], spec.tau_grid[it],
                                             A_lin[ir, it]))
    best = None
    for ir, r in enumerate(spec.r_candidates):
        it = int(np.argmin(resid[ir]))
        run = _descend(xt, spec, ctx, _snap(spec, r, spec.tau_grid[it], A_lin[ir, it]))
        if best is None or run.cost < best.cost:
            best = run
    return best


def exhaustive_oracle(x: Frame, spec: NonlinearGridSpec, ctx: CascadeContext,
                      cap: int = 1_000_000, chunk: int = 4096) -> EstimationResult:
    """Exact grid argmin of the non-linear cost over all (r, tau, |A|, angle(A)).

    Ties go to the lexicographically smallest (r, tau, |A|, angle(A)) indices.
    """
    if spec.size > cap:
        raise ValueError(f"grid has {spec.size} points, above the cap of {cap}")
    ctx.grid.check_same(x.grid)
    xt = x.time
    taus, amps, phases = spec.tau_grid, spec.amp_grid, spec.phase_grid
    T, Aa, P = taus.size, amps.size, phases.size
    it, ia, ip = (g.ravel() for g in np.meshgrid(np.arange(T), np.arange(Aa), np.arange(P),
                                                 indexing="ij"))
    A_all = amps[ia] * np.exp(1j * phases[ip])
    tau_all = taus[it]
    costs = np.empty((len(spec.r_candidates), it.size))
    for lo in range(0, it.size, chunk):
        hi = lo + chunk
        costs[:, lo:hi] = ctx.costs(xt, A_all[lo:hi], tau_all[lo:hi], spec.r_candidates)
    ir, flat = np.unravel_index(np.argmin(costs), costs.shape)
    return EstimationResult(
        r_hat=spec.r_candidates[ir], tau_hat=float(tau_all[flat]), A_hat=complex(A_all[flat]),
        cost=float(costs[ir, flat]), sweeps=1, converged=True)
