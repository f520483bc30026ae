"""Seeded Monte Carlo campaigns: error rate of r_hat != r versus input amplitude.

Every trial draws its randomness from ``SeedSequence([master_seed,
amplitude_index, trial_index])``. The same stream is reused for each
non-linearity setting, so curves for different lambdas are compared on
common random numbers.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._csvio import fmt
from .cascade_sim import LAMBDA_1, LAMBDA_2, AmplifierModel, CascadeConfig, NoiseMode, UplinkScene
from .estimators import (
    CascadeContext,
    EstimationResult,
    LinearGridSpec,
    NonlinearGridSpec,
    coordinate_descent,
    exhaustive_oracle,
    linear_nls,
    write_results_csv,
)
from .fiber_channel import (
    FrequencyGrid,
    SyntheticFiberParams,
    UnitFiberResponse,
    ingest_measurement,
    read_measurement_csv,
    synth_channel,
)
from .signal_model import generate_pilot

ESTIMATORS = ("auto", "linear", "cd", "oracle")

DEFAULT_AMPLITUDES = (0.4, 0.6, 0.9, 1.3, 1.8, 2.4, 3.0, 3.6)


def default_lambdas():
    return (("lambda0", 0j), ("lambda1", LAMBDA_1), ("lambda2", LAMBDA_2))


def default_nonlinear_spec():
    return NonlinearGridSpec(amp_grid=np.round(np.arange(1, 41) * 0.1, 10))


@dataclass(frozen=True)
class ExperimentConfig:
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)
    channel: SyntheticFiberParams | str = field(default_factory=SyntheticFiberParams)
    smooth_window: int = 9
    M: int = 5
    r_true: int = 3
    gain_db: float = 2.4
    lambdas: tuple = field(default_factory=default_lambdas)
    noise_var: float = 1.0
    noise_mode: NoiseMode = NoiseMode.PER_STAGE
    amplitudes: tuple = DEFAULT_AMPLITUDES
    trials: int = 1000
    master_seed: int = 20240611
    estimator: str = "auto"
    init: str = "per_r"
    tau_true: float | None = None
    linear_spec: LinearGridSpec = field(default_factory=LinearGridSpec)
    nonlinear_spec: NonlinearGridSpec = field(default_factory=default_nonlinear_spec)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.amplitudes or min(self.amplitudes) <= 0:
            raise ValueError("amplitudes must be a non-empty set of positive values")
        if not 1 <= self.r_true <= self.M:
            raise ValueError(f"r_true={self.r_true} outside 1..{self.M}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if not self.lambdas:
            raise ValueError("at least one non-linearity setting is required")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        object.__setattr__(self, "lambdas", tuple((str(n), complex(l)) for n, l in self.lambdas))
        object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))

    def unit_response(self) -> UnitFiberResponse:
        if isinstance(self.channel, SyntheticFiberParams):
            return synth_channel(self.channel, self.grid)
        return ingest_measurement(read_measurement_csv(self.channel), self.grid, self.smooth_window)

    def cascade(self, lam: complex, unit: UnitFiberResponse | None = None) -> CascadeConfig:
        unit = self.unit_response() if unit is None else unit
        return CascadeConfig(M=self.M, unit=unit, pa=AmplifierModel.from_db(self.gain_db, lam),
                             noise_var=self.noise_var, noise_mode=self.noise_mode,
                             seed=self.master_seed)

    def estimator_for(self, lam: complex) -> str:
        if self.estimator != "auto":
            return self.estimator
        return "linear" if lam == 0 else "cd"

    # -- JSON-friendly round trip ------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "grid": asdict(self.grid),
            "channel": (asdict(self.channel) if isinstance(self.channel, SyntheticFiberParams)
                        else {"measurement_csv": str(self.channel)}),
            "lambdas": [[n, [l.real, l.imag]] for n, l in self.lambdas],
            "noise_mode": self.noise_mode.value,
            "amplitudes": list(self.amplitudes),
            "linear_spec": {"r_candidates": list(self.linear_spec.r_candidates),
                            "tau_grid_s": self.linear_spec.tau_grid.tolist()},
            "nonlinear_spec": {
                "tau_grid_s": self.nonlinear_spec.tau_grid.tolist(),
                "amp_grid": self.nonlinear_spec.amp_grid.tolist(),
                "phase_grid_rad": self.nonlinear_spec.phase_grid.tolist(),
                "r_candidates": list(self.nonlinear_spec.r_candidates),
                "threshold": self.nonlinear_spec.threshold,
                "max_sweeps": self.nonlinear_spec.max_sweeps,
            },
        }
        for name in ("smooth_window", "M", "r_true", "gain_db", "noise_var", "trials",
                     "master_seed", "estimator", "init", "tau_true"):
            d[name] = getattr(self, name)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kw = {}
        if "grid" in d:
            kw["grid"] = FrequencyGrid(**d.pop("grid"))
        if "channel" in d:
            ch = d.pop("channel")
            kw["channel"] = ch["measurement_csv"] if "measurement_csv" in ch else SyntheticFiberParams(**ch)
        if "lambdas" in d:
            kw["lambdas"] = tuple((n, complex(*v) if isinstance(v, (list, tuple)) else complex(v))
                                  for n, v in d.pop("lambdas"))
        if "amplitudes" in d:
            kw["amplitudes"] = tuple(d.pop("amplitudes"))
        if "linear_spec" in d:
            ls = d.pop("linear_spec")
            kw["linear_spec"] = LinearGridSpec(
                ls.get("r_candidates", (1, 2, 3, 4, 5)),
                ls["tau_grid_s"] if "tau_grid_s" in ls else LinearGridSpec().tau_grid)
        if "nonlinear_spec" in d:
            ns = d.pop("nonlinear_spec")
            base = default_nonlinear_spec()
            kw["nonlinear_spec"] = NonlinearGridSpec(
                tau_grid=ns.get("tau_grid_s", base.tau_grid),
                amp_grid=ns.get("amp_grid", base.amp_grid),
                phase_grid=ns.get("phase_grid_rad", base.phase_grid),
                r_candidates=ns.get("r_candidates", base.r_candidates),
                threshold=ns.get("threshold", base.threshold),
                max_sweeps=ns.get("max_sweeps", base.max_sweeps),
            )
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        kw.update(d)
        return cls(**kw)


@dataclass(frozen=True)
class TrialOutcome:
    lambda_label: str
    amplitude: float
    trial: int
    r_true: int
    result: EstimationResult
    runtime: float

    @property
    def success(self) -> bool:
        return self.result.r_hat == self.r_true

    def row(self) -> list:
        return [self.lambda_label, fmt(self.amplitude)] + self.result.as_row(self.trial, self.r_true)


@dataclass(frozen=True)
class ErrorRateCurve:
    lambda_label: str
    lam: complex
    amplitudes: tuple
    trials: tuple
    errors: tuple
    mean_runtime: tuple

    @property
    def error_rate(self) -> np.ndarray:
        return np.array(self.errors, dtype=float) / np.array(self.trials, dtype=float)

    @property
    def standard_error(self) -> np.ndarray:
        p = self.error_rate
        return np.sqrt(p * (1 - p) / np.array(self.trials, dtype=float))

    def wilson(self, z: float = 1.96) -> np.ndarray:
        """Wilson score interval per point, shape (n_points, 2)."""
        n = np.array(self.trials, dtype=float)
        p = self.error_rate
        centre = (p + z * z / (2 * n)) / (1 + z * z / n)
        half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
        return np.stack([centre - half, centre + half], axis=1)


def trial_rng(master_seed: int, amplitude_index: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, amplitude_index, trial_index]))


def run_trial(cfg: ExperimentConfig, amplitude_index: int, trial_index: int, lambda_index: int = 0,
              unit: UnitFiberResponse | None = None) -> TrialOutcome:
    """Simulate one capture and estimate its hop count."""
    label, lam = cfg.lambdas[lambda_index]
    amplitude = cfg.amplitudes[amplitude_index]
    cascade = cfg.cascade(lam, unit)
    rng = trial_rng(cfg.master_seed, amplitude_index, trial_index)
    pilot = generate_pilot(cfg.grid.K, int(rng.integers(2 ** 63 - 1)))
    A = amplitude * np.exp(1j * rng.uniform(-np.pi, np.pi))
    tau = cfg.tau_true if cfg.tau_true is not None else float(rng.choice(cfg.nonlinear_spec.tau_grid))
    x = UplinkScene(A, tau, cfg.r_true, cascade).receive(pilot, rng=rng)

    t0 = time.perf_counter()
    kind = cfg.estimator_for(lam)
    if kind == "linear":
        result = linear_nls(x, cfg.linear_spec, pilot, cascade.unit, cascade.pa.G)
    else:
        ctx = CascadeContext.from_config(cascade, pilot)
        if kind == "cd":
            result = coordinate_descent(x, cfg.nonlinear_spec, ctx, init=cfg.init)
        else:
            result = exhaustive_oracle(x, cfg.nonlinear_spec, ctx)
    return TrialOutcome(label, amplitude, trial_index, cfg.r_true, result, time.perf_counter() - t0)


def _run_block(args) -> list[TrialOutcome]:
    cfg, lambda_index, amplitude_index, trial_indices = args
    unit = cfg.unit_response()
    return [run_trial(cfg, amplitude_index, t, lambda_index, unit) for t in trial_indices]


def run_campaign(cfg: ExperimentConfig, jobs: int = 1, progress=None) -> list[TrialOutcome]:
    """All trials of all (lambda, amplitude) points, in canonical order."""
    blocks = [(cfg, li, ai, range(cfg.trials))
              for li in range(len(cfg.lambdas)) for ai in range(len(cfg.amplitudes))]
    outcomes = []
    if jobs <= 1:
        for b in blocks:
            outcomes.extend(_run_block(b))
            if progress:
                progress(b)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for b, res in zip(blocks, pool.map(_run_block, blocks)):
                outcomes.extend(res)
                if progress:
                    progress(b)
    return sorted(outcomes, key=lambda o: (_label_index(cfg, o.lambda_label),
                                           cfg.amplitudes.index(o.amplitude), o.trial))


def _label_index(cfg, label):
    return [n for n, _ in cfg.lambdas].index(label)


def aggregate(cfg: ExperimentConfig, outcomes: Sequence[TrialOutcome]) -> list[ErrorRateCurve]:
    """Reduce trial outcomes to one curve per lambda; independent of outcome order."""
    curves = []
    for label, lam in cfg.lambdas:
        trials, errors, runtime = [], [], []
        for a in cfg.amplitudes:
            sel = [o for o in outcomes if o.lambda_label == label and o.amplitude == a]
            trials.append(len(sel))
            errors.append(sum(not o.success for o in sel))
            runtime.append(float(np.mean([o.runtime for o in sel])) if sel else math.nan)
        curves.append(ErrorRateCurve(label, lam, cfg.amplitudes, tuple(trials), tuple(errors),
                                     tuple(runtime)))
    return curves


def sweep(cfg: ExperimentConfig, jobs: int = 1, progress=None):
    """Run a campaign; returns ``(curves, outcomes)``."""
    outcomes = run_campaign(cfg, jobs, progress)
    return aggregate(cfg, outcomes), outcomes


CURVE_HEADER = ["lambda_label", "amplitude", "trials", "errors", "error_rate"]


def write_curves_csv(curves: Sequence[ErrorRateCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for c in curves:
            for a, n, e, p in zip(c.amplitudes, c.trials, c.errors, c.error_rate):
                w.writerow([c.lambda_label, fmt(a), n, e, fmt(p)])


def write_trials_csv(outcomes: Sequence[TrialOutcome], path) -> None:
    write_results_csv([o.row() for o in outcomes], path, prefix_header=["lambda_label", "amplitude"])


def write_outputs(curves, outcomes, out_dir) -> dict:
    out_dir = Path(out_dir)
    paths = {"curve": out_dir / "curve.csv", "trials": out_dir / "trials.csv"}
    write_curves_csv(curves, paths["curve"])
    write_trials_csv(outcomes, paths["trials"])
    return paths


# -- trend analysis ------------------------------------------------------------

@dataclass(frozen=True)
class Inversion:
    index: int
    magnitude: float
    standard_errors: float


def _pair_se(c: ErrorRateCurve, i: int, j: int) -> float:
    se = c.standard_error
    return float(np.hypot(se[i], se[j]))


def monotone_inversions(curve: ErrorRateCurve) -> list[Inversion]:
    """Adjacent amplitude steps where the error rate goes up."""
    p = curve.error_rate
    out = []
    for i in range(len(p) - 1):
        d = p[i + 1] - p[i]
        if d > 0:
            se = _pair_se(curve, i, i + 1)
            out.append(Inversion(i, float(d), float(d / se) if se > 0 else math.inf))
    return out


def ordering_inversions(upper: ErrorRateCurve, lower: ErrorRateCurve) -> list[Inversion]:
    """Amplitude points where ``upper`` falls below ``lower``."""
    pu, pl = upper.error_rate, lower.error_rate
    su, sl = upper.standard_error, lower.standard_error
    out = []
    for i, a in enumerate(upper.amplitudes):
        if a not in lower.amplitudes:
            continue
        j = lower.amplitudes.index(a)
        d = pl[j] - pu[i]
        if d > 0:
            se = float(np.hypot(su[i], sl[j]))
            out.append(Inversion(i, float(d), float(d / se) if se > 0 else math.inf))
    return out


def trend_ok(inversions: Sequence[Inversion], max_count: int = 1, max_se: float = 2.0) -> bool:
    return len(inversions) <= max_count and all(v.standard_errors <= max_se for v in inversions)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
