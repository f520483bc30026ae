"""Command-line entry point.

    rofcascade [--seed N] [--jobs N] [--out-dir DIR] channel synth|ingest ...
    rofcascade ... simulate --channel channel.csv ...
    rofcascade ... estimate --channel channel.csv --capture capture.csv ...
    rofcascade ... sweep [--config sweep.json] ...

Every command writes ``manifest.json`` (resolved config, seed, version,
input digests, output paths) next to its outputs. A manifest can be passed
back as ``--config`` to reproduce the run; explicit flags override file values.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from ._csvio import FormatError
from .cascade_sim import LAMBDA_1, LAMBDA_2, AmplifierModel, CascadeConfig, NoiseMode, UplinkScene
from .estimators import (
    NS,
    CascadeContext,
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
    ingest_measurement,
    read_channel_csv,
    read_measurement_csv,
    synth_channel,
    write_channel_csv,
)
from .montecarlo import ExperimentConfig, sweep, write_curves_csv, write_trials_csv
from .signal_model import generate_pilot, read_frame_csv, write_frame_csv

log = logging.getLogger("rofcascade")

NAMED_LAMBDAS = {"lambda0": 0j, "lambda1": LAMBDA_1, "lambda2": LAMBDA_2}


class CliError(Exception):
    pass


def parse_lambda(text) -> complex:
    """``lambda1``/``lambda2``/``lambda0``, ``re,im``, or a Python complex literal."""
    if isinstance(text, (int, float, complex)):
        return complex(text)
    if isinstance(text, (list, tuple)):
        return complex(*text)
    t = str(text).strip()
    if t in NAMED_LAMBDAS:
        return NAMED_LAMBDAS[t]
    try:
        if "," in t:
            re_, im_ = (float(v) for v in t.split(","))
            return complex(re_, im_)
        return complex(t.replace(" ", ""))
    except ValueError as exc:
        raise CliError(f"cannot parse non-linearity factor {text!r}") from exc


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot load config {path}: {exc}") from exc
    # a manifest carries the resolved config under "config"
    return data.get("config", data) if isinstance(data, dict) else {}


def _merge(file_cfg: dict, args, keys) -> dict:
    out = dict(file_cfg)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


class Outputs:
    """Writes files atomically; on failure every file already written is removed."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.written = []

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        return self

    def path(self, name) -> Path:
        return self.dir / name

    def write(self, name, writer):
        final = self.path(name)
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        os.close(fd)
        try:
            writer(tmp)
            os.replace(tmp, final)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        self.written.append(final)
        return final

    def json(self, name, obj):
        def w(p):
            with open(p, "w") as fh:
                json.dump(obj, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return self.write(name, w)

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.written:
                p.unlink(missing_ok=True)
        return False


def _manifest(command, config, seed, inputs, outputs) -> dict:
    return {
        "tool": "rofcascade",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "command": command,
        "config": config,
        "master_seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }


def _grid_from(cfg: dict) -> FrequencyGrid:
    return FrequencyGrid(f0=float(cfg.get("f0_hz", 140e9)),
                         bandwidth=float(cfg.get("bandwidth_hz", 1e9)),
                         K=int(cfg.get("K", 64)))


# -- channel ---------------------------------------------------------------------

def cmd_channel(args) -> int:
    cfg = load_config(args.config)
    grid_keys = ["f0_hz", "bandwidth_hz", "K"]
    if args.mode == "synth":
        cfg = _merge(cfg, args, grid_keys + ["atten_low_db", "atten_high_db",
                                             "mean_group_delay_ns", "group_delay_slope_ns_per_ghz"])
        params = SyntheticFiberParams(
            atten_low=float(cfg.get("atten_low_db", 1.4)),
            atten_high=float(cfg.get("atten_high_db", 2.4)),
            mean_group_delay=float(cfg.get("mean_group_delay_ns", 5.0)) * NS,
            group_delay_slope=float(cfg.get("group_delay_slope_ns_per_ghz", 0.5)) * NS / 1e9,
        )
        H = synth_channel(params, _grid_from(cfg))
        inputs = []
    else:
        cfg = _merge(cfg, args, grid_keys + ["measurement", "smooth_window"])
        if "measurement" not in cfg:
            raise CliError("channel ingest needs --measurement")
        table = read_measurement_csv(cfg["measurement"])
        H = ingest_measurement(table, _grid_from(cfg), int(cfg.get("smooth_window", 9)))
        inputs = [cfg["measurement"]]
    cfg["mode"] = args.mode
    with Outputs(args.out_dir) as out:
        name = args.output or "channel.csv"
        out.json("manifest.json", _manifest("channel", cfg, args.seed, inputs, [out.path(name)]))
        out.write(name, lambda p: write_channel_csv(H, p))
    print(f"min |H| = {H.magnitude.min():.6f} ({20 * np.log10(H.magnitude.min()):.3f} dB); "
          f"wrote {out.path(name)}")
    return 0


# -- simulate / estimate ---------------------------------------------------------

SCENE_KEYS = ["channel", "M", "r", "amplitude", "phase_rad", "tau_ns", "gain_db", "lam",
              "noise_var", "noise_mode", "regime", "pilot_seed"]


def _scene_cascade(cfg, unit, lam) -> CascadeConfig:
    return CascadeConfig(M=int(cfg.get("M", 5)), unit=unit,
                         pa=AmplifierModel.from_db(float(cfg.get("gain_db", 2.4)), lam),
                         noise_var=float(cfg.get("noise_var", 0.0)),
                         noise_mode=NoiseMode(cfg.get("noise_mode", "per_stage")))


def _load_channel(path):
    if not path:
        raise CliError("a --channel file is required")
    if not Path(path).exists():
        raise CliError(f"channel file not found: {path}")
    return read_channel_csv(path)


def cmd_simulate(args) -> int:
    cfg = _merge(load_config(args.config), args, SCENE_KEYS)
    unit = _load_channel(cfg.get("channel"))
    lam = parse_lambda(cfg.get("lam", 0))
    cascade = _scene_cascade(cfg, unit, lam)
    r = int(cfg.get("r", 3))
    if not 1 <= r <= cascade.M:
        raise CliError(f"hop count r={r} outside 1..{cascade.M}")
    seed = args.seed
    pilot_seed = int(cfg.get("pilot_seed", seed))
    A = float(cfg.get("amplitude", 1.0)) * np.exp(1j * float(cfg.get("phase_rad", 0.0)))
    scene = UplinkScene(A, float(cfg.get("tau_ns", 5.0)) * NS, r, cascade)
    regime = cfg.get("regime", "auto")
    nonlinear = None if regime == "auto" else regime == "nonlinear"
    pilot = generate_pilot(unit.grid.K, pilot_seed)
    frame = scene.receive(pilot, nonlinear, np.random.default_rng(seed))
    cfg.update(lam=[lam.real, lam.imag], pilot_seed=pilot_seed)
    with Outputs(args.out_dir) as out:
        name = args.output or "capture.csv"
        out.json("manifest.json", _manifest("simulate", cfg, seed, [cfg["channel"]], [out.path(name)]))
        out.write(name, lambda p: write_frame_csv(frame, p))
    print(f"wrote {out.path(name)}")
    return 0


def cmd_estimate(args) -> int:
    cfg = _merge(load_config(args.config), args,
                 SCENE_KEYS + ["capture", "estimator", "r_true", "init"])
    unit = _load_channel(cfg.get("channel"))
    if not cfg.get("capture") or not Path(cfg["capture"]).exists():
        raise CliError(f"capture file not found: {cfg.get('capture')}")
    x = read_frame_csv(cfg["capture"], unit.grid)
    lam = parse_lambda(cfg.get("lam", 0))
    cascade = _scene_cascade(cfg, unit, lam)
    pilot_seed = int(cfg.get("pilot_seed", args.seed))
    pilot = generate_pilot(unit.grid.K, pilot_seed)
    kind = cfg.get("estimator", "auto")
    if kind == "auto":
        kind = "linear" if lam == 0 else "cd"
    rs = tuple(range(1, cascade.M + 1))
    if kind == "linear":
        result = linear_nls(x, LinearGridSpec(rs), pilot, unit, cascade.pa.G)
    elif kind in ("cd", "oracle"):
        spec = NonlinearGridSpec(r_candidates=rs, amp_grid=np.round(np.arange(1, 41) * 0.1, 10))
        ctx = CascadeContext.from_config(cascade, pilot)
        result = (coordinate_descent(x, spec, ctx, init=cfg.get("init", "per_r")) if kind == "cd"
                  else exhaustive_oracle(x, spec, ctx))
    else:
        raise CliError(f"unknown estimator {kind!r}")
    if result.ambiguous:
        print("warning: hop-count estimate is ambiguous: several r reach the same residual",
              file=sys.stderr)
    r_true = cfg.get("r_true")
    r_true = int(r_true) if r_true is not None else None
    cfg.update(lam=[lam.real, lam.imag], pilot_seed=pilot_seed, estimator=kind)
    with Outputs(args.out_dir) as out:
        name = args.output or "result.csv"
        out.json("manifest.json", _manifest("estimate", cfg, args.seed,
                                            [cfg["channel"], cfg["capture"]], [out.path(name)]))
        out.write(name, lambda p: write_results_csv([result.as_row(0, r_true)], p))
    print(f"r_hat={result.r_hat} tau_hat={result.tau_hat / NS:.2f} ns "
          f"A_hat={result.A_hat:.4f} cost={result.cost:.4g}")
    return 0


# -- sweep -----------------------------------------------------------------------

def cmd_sweep(args) -> int:
    raw = load_config(args.config)
    for key in ("trials", "estimator", "init", "noise_var", "r_true", "M", "gain_db"):
        if getattr(args, key, None) is not None:
            raw[key] = getattr(args, key)
    if args.amplitudes:
        raw["amplitudes"] = [float(a) for a in args.amplitudes.split(",")]
    if args.lambdas:
        lam = {}
        for item in args.lambdas.split(";"):
            label, _, value = item.partition("=")
            v = parse_lambda(value or label)
            lam[label] = [v.real, v.imag]
        raw["lambdas"] = list(lam.items())
    if args.measurement:
        raw["channel"] = {"measurement_csv": args.measurement}
    raw["master_seed"] = args.seed if args.seed_given else raw.get("master_seed", args.seed)
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid sweep configuration: {exc}") from exc
    inputs = [] if not isinstance(cfg.channel, str) else [cfg.channel]

    def progress(block):
        _, li, ai, _ = block
        log.info("done %s amplitude=%g", cfg.lambdas[li][0], cfg.amplitudes[ai])

    t0 = time.perf_counter()
    curves, outcomes = sweep(cfg, jobs=args.jobs, progress=progress)
    elapsed = time.perf_counter() - t0
    with Outputs(args.out_dir) as out:
        out.json("manifest.json", _manifest("sweep", cfg.to_dict(), cfg.master_seed, inputs,
                                            [out.path("curve.csv"), out.path("trials.csv")]))
        out.write("curve.csv", lambda p: write_curves_csv(curves, p))
        out.write("trials.csv", lambda p: write_trials_csv(outcomes, p))
        out.json("timing.json", {
            "elapsed_s": elapsed, "jobs": args.jobs,
            "mean_trial_runtime_s": {c.lambda_label: list(c.mean_runtime) for c in curves}})
    for c in curves:
        print(c.lambda_label, " ".join(f"{a:g}:{p:.3f}" for a, p in zip(c.amplitudes, c.error_rate)))
    return 0


# -- parser ----------------------------------------------------------------------

def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d if suppress else 0, help="master seed")
    p.add_argument("--jobs", type=int, default=d if suppress else (os.cpu_count() or 1),
                   help="parallel workers (default: available cores)")
    p.add_argument("--out-dir", default=d if suppress else ".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rofcascade", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    common.add_argument("--config", help="JSON config or manifest; flags override it")
    common.add_argument("--output", help="output file name inside --out-dir")

    ch = sub.add_parser("channel", help="build a unit fiber response")
    ch_sub = ch.add_subparsers(dest="mode", required=True)
    for mode in ("synth", "ingest"):
        p = ch_sub.add_parser(mode, parents=[common])
        p.add_argument("--f0-hz", dest="f0_hz", type=float)
        p.add_argument("--bandwidth-hz", dest="bandwidth_hz", type=float)
        p.add_argument("--K", dest="K", type=int)
        p.set_defaults(func=cmd_channel)
    synth, ingest = ch_sub.choices["synth"], ch_sub.choices["ingest"]
    synth.add_argument("--atten-low-db", dest="atten_low_db", type=float)
    synth.add_argument("--atten-high-db", dest="atten_high_db", type=float)
    synth.add_argument("--mean-group-delay-ns", dest="mean_group_delay_ns", type=float)
    synth.add_argument("--group-delay-slope-ns-per-ghz", dest="group_delay_slope_ns_per_ghz",
                       type=float)
    ingest.add_argument("--measurement", help="CSV with freq_hz,mag_db,group_delay_s")
    ingest.add_argument("--smooth-window", dest="smooth_window", type=int)

    def scene_args(p):
        p.add_argument("--channel")
        p.add_argument("--M", dest="M", type=int)
        p.add_argument("--r", dest="r", type=int)
        p.add_argument("--amplitude", type=float)
        p.add_argument("--phase-rad", dest="phase_rad", type=float)
        p.add_argument("--tau-ns", dest="tau_ns", type=float)
        p.add_argument("--gain-db", dest="gain_db", type=float)
        p.add_argument("--lambda", dest="lam", help="lambda0|lambda1|lambda2|re,im|complex")
        p.add_argument("--noise-var", dest="noise_var", type=float)
        p.add_argument("--noise-mode", dest="noise_mode", choices=[m.value for m in NoiseMode])
        p.add_argument("--pilot-seed", dest="pilot_seed", type=int)

    sim = sub.add_parser("simulate", parents=[common], help="simulate a CU capture")
    scene_args(sim)
    sim.add_argument("--regime", choices=["auto", "linear", "nonlinear"])
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", parents=[common], help="estimate (r, tau, A) from a capture")
    scene_args(est)
    est.add_argument("--capture")
    est.add_argument("--estimator", choices=["auto", "linear", "cd", "oracle"])
    est.add_argument("--init", choices=["per_r", "linear", "grid"])
    est.add_argument("--r-true", dest="r_true", type=int)
    est.set_defaults(func=cmd_estimate)

    sw = sub.add_parser("sweep", parents=[common], help="Monte Carlo error-rate sweep")
    sw.add_argument("--trials", type=int)
    sw.add_argument("--amplitudes", help="comma-separated |A| values")
    sw.add_argument("--lambdas", help="semicolon-separated label=value items, e.g. 'lambda1;lambda2'")
    sw.add_argument("--estimator", choices=["auto", "linear", "cd", "oracle"])
    sw.add_argument("--init", choices=["per_r", "linear", "grid"])
    sw.add_argument("--noise-var", dest="noise_var", type=float)
    sw.add_argument("--r-true", dest="r_true", type=int)
    sw.add_argument("--M", dest="M", type=int)
    sw.add_argument("--gain-db", dest="gain_db", type=float)
    sw.add_argument("--measurement", help="measurement CSV to use instead of the synthetic channel")
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CliError, FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
