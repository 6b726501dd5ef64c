"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py            # kernel timings
    python3 benchmarks/bench_kernels.py --step     # plus one training step per path, in subprocesses

Each kernel result is checked for equality between the two paths before timing.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from vesselmtl import USE_NUMBA, kernels

STEP_SNIPPET = """
import time, numpy as np
from vesselmtl import ops
from vesselmtl.model import ModelConfig, build, forward
from vesselmtl.tensor import Tape, Tensor, backward
rng = np.random.default_rng(0)
p = build(ModelConfig(base_channels=16, depth=3))
x = Tensor(rng.random((4, 1, 64, 64), dtype=np.float32))
m = Tensor((rng.random((4, 1, 64, 64)) > 0.8).astype(np.float32))
d = Tensor(rng.random((4, 1, 64, 64), dtype=np.float32))
def step():
    with Tape() as tape:
        out = forward(p, x)
        backward(ops.add(ops.bce_with_logits(out.seg_logits, m), ops.mse(out.dt_pred, d)))
        tape.clear()
step()
t = time.perf_counter()
for _ in range(5):
    step()
print((time.perf_counter() - t) / 5 * 1000)
"""


def best_ms(fn, number):
    return min(timeit.repeat(fn, number=number, repeat=5)) / number * 1000


def cases(rng):
    xh = rng.standard_normal((4, 66, 66, 16)).astype(np.float32)  # padded NHWC, 64x64 output
    cols = kernels.im2col_numpy(xh, 3, 3, 1, 64, 64)
    x = rng.standard_normal((4, 16, 64, 64)).astype(np.float32)
    out, arg = kernels.maxpool2_forward_numpy(x)
    mask = rng.random((128, 128)) < 0.3
    f = np.where(mask, np.inf, 0.0)
    return [
        ("im2col 4x64x64x16, 3x3", lambda: kernels.im2col_numpy(xh, 3, 3, 1, 64, 64),
         lambda: kernels.im2col_numba(xh, 3, 3, 1, 64, 64), 20),
        ("col2im 4x64x64x16, 3x3", lambda: kernels.col2im_numpy(cols, xh.shape, 3, 3, 1, 64, 64),
         lambda: kernels.col2im_numba(cols, xh.shape, 3, 3, 1, 64, 64), 20),
        ("maxpool2 forward 4x16x64x64", lambda: kernels.maxpool2_forward_numpy(x),
         lambda: kernels.maxpool2_forward_numba(x), 50),
        ("maxpool2 backward 4x16x64x64", lambda: kernels.maxpool2_backward_numpy(out, arg),
         lambda: kernels.maxpool2_backward_numba(out, arg), 50),
        ("edt row pass 128x128", lambda: kernels.edt_sq_rows.py_func(f),
         lambda: kernels.edt_sq_rows(f), 3),
    ]


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def step_ms(no_numba):
    env = dict(os.environ, VESSELMTL_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-c", STEP_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--step", action="store_true", help="also time a full training step under each path")
    args = ap.parse_args(argv)
    if not USE_NUMBA:
        sys.exit("numba is disabled (VESSELMTL_NO_NUMBA is set or numba is missing); nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':32s}{'numpy ms':>12s}{'numba ms':>12s}{'speedup':>10s}")
    for name, slow, fast, number in cases(rng):
        if not same(slow(), fast()):  # also triggers compilation
            sys.exit(f"{name}: the two paths disagree")
        t_np, t_nb = best_ms(slow, number), best_ms(fast, number)
        print(f"{name:32s}{t_np:12.3f}{t_nb:12.3f}{t_np / t_nb:9.1f}x")
    if args.step:
        t_np, t_nb = step_ms(True), step_ms(False)
        name = "train step (B=16, 4x64x64)"
        print(f"{name:32s}{t_np:12.1f}{t_nb:12.1f}{t_np / t_nb:9.1f}x")


if __name__ == "__main__":
    main()
