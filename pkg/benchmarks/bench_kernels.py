"""Time each hot kernel in its numpy and numba flavour, then one training step
under each backend (the backend is fixed at import time, so that part runs in
subprocesses with ``V2IVISION_DISABLE_NUMBA`` set or unset).

    python benchmarks/bench_kernels.py [--repeat 5] [--skip-step]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from v2ivision import kernels as K

STEP_SNIPPET = """
import timeit, numpy as np
from v2ivision import predictor as P, _accel
p = P.init_params(1, 108, 192, seed=0)
x = (np.random.default_rng(0).random((64, 108, 192, 1)) > 0.9).astype(np.float32)
t = np.random.default_rng(1).standard_normal(64).astype(np.float32)
P.backward(p, x, t)
print(_accel.backend(), min(timeit.repeat(lambda: P.backward(p, x, t), number=1, repeat={repeat})))
"""


def cases():
    r = np.random.default_rng(0)
    x = (r.random((64, 54, 96, 8)) > 0.5).astype(np.float32)
    cols = K.im2col_numpy(x, 3, 2, 1)
    snaps = r.exponential(size=(3000, 64))
    wts = (r.random(3000) > 0.02).astype(float)
    hull = np.array([[40.0, 30.0], [150.0, 35.0], [160.0, 80.0], [60.0, 90.0], [35.0, 60.0]])
    q = np.sort(r.uniform(0, 45, 3300))
    ref = np.arange(4500) / 100.0
    return {
        "im2col (64x54x96x8, k3 s2)": ("im2col", (x, 3, 2, 1)),
        "col2im (same geometry)": ("col2im", (cols, x.shape, 3, 2, 1)),
        "windowed_mean (3000x64, span 32)": ("windowed_mean", (snaps, wts, 32)),
        "rasterize_convex (108x192)": ("rasterize_convex", (hull, 108, 192)),
        "nearest_within (3300 vs 4500)": ("nearest_within", (q, ref, 0.00685)),
    }


def bench_kernels(repeat):
    print(f"{'kernel':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, (name, args) in cases().items():
        np_fn, nb_fn = K.IMPLEMENTATIONS[name]
        row = []
        for fn in (np_fn, nb_fn):
            if fn is None:
                row.append(float("nan"))
                continue
            fn(*args)  # compile / warm caches
            row.append(1e3 * min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)))
        print(f"{label:36s} {row[0]:10.2f} {row[1]:10.2f} {row[0] / row[1]:8.2f}")


def bench_step(repeat):
    print("\ntraining step, batch 64, full-size single-mask input")
    for flag in ("1", ""):
        env = dict(os.environ, V2IVISION_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(repeat=repeat)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  backend={out[0]:6s} {1e3 * float(out[1]):8.1f} ms")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-step", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.repeat)
    if not args.skip_step:
        bench_step(args.repeat)


if __name__ == "__main__":
    main()
