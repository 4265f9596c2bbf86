"""Compare the numba and numpy LSTM kernels.

    python benchmarks/bench_kernels.py            # kernel timings
    python benchmarks/bench_kernels.py --epoch    # plus one training epoch per backend

Kernel timings call both implementations in one process. The epoch timing
starts a fresh interpreter per backend so LCSCAL_BACKEND takes effect.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from lcscal import _kernels

# (W, B, F, H): single-window inference up to reference-size training batches
SHAPES = [(6, 1, 5, 8), (12, 1, 32, 128), (12, 16, 32, 128), (12, 64, 32, 32), (12, 64, 32, 128)]

EPOCH_SNIPPET = """
import time
from lcscal import _kernels
from lcscal.neuralnet import ModelConfig, init_params
from lcscal.pipeline import prepare
from lcscal.synthgen import SynthConfig, generate
from lcscal.training import TrainSpec, fit
train, val, _ = prepare(generate(SynthConfig(seed=42, days=10))[0]).windows(12)
model = init_params(ModelConfig(n_features=train.n_features), 0)
fit(model, train.subset(slice(0, 64)), val, TrainSpec(max_epochs=1))  # warm-up / JIT
t = time.perf_counter()
fit(model, train, val, TrainSpec(max_epochs=1, eta=1e-3))
print(_kernels.BACKEND, time.perf_counter() - t)
"""


def bench_shape(W, B, F, H, repeat, rng):
    x = rng.normal(size=(W, B, F))
    w_input = 0.1 * rng.normal(size=(4 * H, F))
    w_hidden = 0.1 * rng.normal(size=(4 * H, H))
    bias = np.zeros(4 * H)
    dh = rng.normal(size=(B, H))
    times = {}
    for name in ("numpy", "numba"):
        fwd = getattr(_kernels, f"lstm_forward_{name}")
        bwd = getattr(_kernels, f"lstm_backward_{name}")

        def step():
            cache = fwd(x, w_input, w_hidden, bias)
            bwd(x, w_hidden, *cache, dh)

        step()  # compile / warm caches
        times[name] = min(timeit.repeat(step, number=repeat, repeat=3)) / repeat
    return times


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=50, help="calls per timing sample")
    ap.add_argument("--epoch", action="store_true", help="also time one training epoch per backend")
    args = ap.parse_args()

    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not available (or LCSCAL_BACKEND=numpy is set); nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'W':>3} {'B':>4} {'F':>4} {'H':>4}  {'numpy ms':>10} {'numba ms':>10} {'numpy/numba':>12}")
    for shape in SHAPES:
        t = bench_shape(*shape, args.repeat, rng)
        ratio = t["numpy"] / t["numba"]
        print(f"{shape[0]:>3} {shape[1]:>4} {shape[2]:>4} {shape[3]:>4}  {t['numpy'] * 1e3:10.3f} {t['numba'] * 1e3:10.3f} {ratio:12.2f}")

    if args.epoch:
        print("\none epoch, 10-day synthetic PM2.5, H=128, batch 64:")
        for backend in ("numpy", "numba"):
            env = {**os.environ, "LCSCAL_BACKEND": backend}
            out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
            name, seconds = out.stdout.split()
            print(f"  {name:6s} {float(seconds):.2f} s")


if __name__ == "__main__":
    main()
