"""Compare the compiled and pure cascade kernels.

    python benchmarks/bench_kernels.py [--stages 5] [--repeat 200]

Frames are delayed QPSK pilots at |A| = 3 filtered by the default synthetic
fiber taps. Prints per-call time for both backends over a range of batch
sizes, plus the largest relative difference between their outputs.
"""

import argparse
import timeit

import numpy as np

from rofcascade.fiber_channel import FrequencyGrid, impulse_taps, synth_channel
from rofcascade.kernels import _pure
from rofcascade.signal_model import delay_phasor, generate_pilot, to_time

try:
    from rofcascade.kernels import _ckernels
except ImportError:
    _ckernels = None


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--K", type=int, default=64, help="frequency bins (samples per frame)")
    p.add_argument("--stages", type=int, default=5)
    p.add_argument("--batches", default="1,10,32,320,1000")
    p.add_argument("--repeat", type=int, default=200)
    args = p.parse_args()

    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    grid = FrequencyGrid(K=args.K)
    beta = impulse_taps(synth_channel(grid=grid)).beta
    pilot = generate_pilot(args.K, 0).s
    lam = -(8 / 27) * np.exp(0.2j)
    print(f"K={args.K} taps={beta.size} stages={args.stages}")
    print(f"{'batch':>6} {'pure us':>10} {'compiled us':>12} {'speedup':>8} {'rel diff':>10}")
    for B in (int(b) for b in args.batches.split(",")):
        tau = rng.uniform(1e-9, 10e-9, B)
        x = 3.0 * np.exp(1j * rng.uniform(-np.pi, np.pi, (B, 1))) * to_time(delay_phasor(grid, tau) * pilot)
        n = max(3, args.repeat // max(1, B // 10))
        res = {}
        for name, mod in (("pure", _pure), ("compiled", _ckernels)):
            def call(mod=mod):
                return mod.cascade_stages(x, beta, 1.318, lam, args.stages, False)
            res[name] = call()
            res[name + "_t"] = min(timeit.repeat(call, number=n, repeat=3)) / n * 1e6
        diff = np.max(np.abs(res["pure"] - res["compiled"])) / np.max(np.abs(res["pure"]))
        print(f"{B:>6} {res['pure_t']:>10.1f} {res['compiled_t']:>12.1f} "
              f"{res['pure_t'] / res['compiled_t']:>7.2f}x {diff:>10.1e}")


if __name__ == "__main__":
    main()
