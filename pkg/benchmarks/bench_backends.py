#!/usr/bin/env python3
"""Benchmark the compiled core against the pure-NumPy fallback.

Times the individual hot kernels and a full training step on both
backends, printing a table with speedups.  Run from the repo root:

    python3 benchmarks/bench_backends.py [--batch 8192] [--steps 40]
"""

import argparse
import time

import numpy as np

from probegrid import backends
from probegrid.indexing import AUX_PRIMES, PRIMARY_PRIMES
from probegrid.model import HyperParams, init_model
from probegrid.trainer import TrainConfig, TrainState


def timeit(fn, reps):
    fn()  # warm
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)) * 1e3


def kernel_benchmarks(batch, reps):
    rng = np.random.default_rng(0)
    n_f, n_c, n_p, res = 2**6, 2**14, 2**4, 256
    xs = rng.random((batch, 2), dtype=np.float32)
    feats = rng.standard_normal((n_f, 2)).astype(np.float32)
    baked = rng.integers(0, n_p, n_c).astype(np.uint8)
    dense_feats = rng.standard_normal((17 * 17, 2)).astype(np.float32)

    rows = {}
    for name in backends.available():
        kern = backends.set_backend(name)
        out = {}
        out["dense_fwd"] = timeit(lambda: kern.dense_fwd(xs, 16, dense_feats), reps)
        out["hashed_fwd"] = timeit(
            lambda: kern.hashed_fwd(xs, res, n_f, feats, PRIMARY_PRIMES), reps)
        out["probed_fwd"] = timeit(
            lambda: kern.probed_fwd(xs, res, n_f, n_c, 4, feats, baked,
                                    PRIMARY_PRIMES, AUX_PRIMES), reps)

        _, base, row, wgt = kern.probed_fwd(xs, res, n_f, n_c, 4, feats,
                                            baked, PRIMARY_PRIMES, AUX_PRIMES)
        up = rng.standard_normal((batch, 2)).astype(np.float32)
        conf = rng.standard_normal((n_c, n_p)).astype(np.float32)
        rows_u, inv = kern.dedup_rows(row, n_c)
        from probegrid.backends.numpy_backend import softmax_rows
        smu = softmax_rows(conf[rows_u])

        def bwd():
            gfeat = np.zeros_like(feats)
            gconf_u = np.zeros_like(smu)
            kern.probed_bwd(up, base, inv, wgt, smu, feats, gfeat, gconf_u)

        out["probed_bwd"] = timeit(bwd, reps)
        out["dedup_rows"] = timeit(lambda: kern.dedup_rows(row, n_c), reps)
        y = rng.random((batch, 32), dtype=np.float32)
        from probegrid.mlp import mlp_init
        params = mlp_init(np.random.default_rng(1), [32, 64, 64, 3], np.float32)
        out["mlp_infer_rows"] = timeit(
            lambda: kern.mlp_infer_rows(y, params.weights, params.biases),
            max(1, reps // 4))
        rows[name] = out
    return rows


def train_step_benchmarks(batch, steps):
    img = np.random.default_rng(0).random((512, 512, 3)).astype(np.float32)
    rows = {}
    for name in backends.available():
        backends.set_backend(name)
        out = {}
        for tag, hyper in [
            ("step np=1", HyperParams(n_f=2**6, n_c=2**12, n_p=1)),
            ("step np=16", HyperParams(n_f=2**6, n_c=2**12, n_p=2**4)),
        ]:
            model = init_model(hyper, seed=0)
            st = TrainState(model, img, TrainConfig(
                steps=10**9, batch_size=batch, seed=0))
            for _ in range(3):
                st.step()
            times = []
            for _ in range(steps):
                t0 = time.perf_counter()
                st.step()
                times.append(time.perf_counter() - t0)
            out[tag] = float(np.median(times)) * 1e3
        rows[name] = out
    return rows


def print_table(title, rows):
    names = list(rows)
    keys = list(rows[names[0]])
    with_speedup = "cython" in rows and "numpy" in rows
    print(f"\n{title}")
    header = f"{'kernel':<16}" + "".join(f"{n:>12}" for n in names)
    if with_speedup:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for k in keys:
        line = f"{k:<16}" + "".join(f"{rows[n][k]:>10.2f}ms" for n in names)
        if with_speedup:
            line += f"{rows['numpy'][k] / rows['cython'][k]:>9.1f}x"
        print(line)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--batch", type=int, default=8192)
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()

    active = backends.name()
    print(f"backends available: {backends.available()} (default: {active})")
    try:
        print_table(f"hot kernels, batch={args.batch} (median ms)",
                    kernel_benchmarks(args.batch, args.reps))
        print_table(f"full training step, 512x512 image, batch={args.batch}",
                    train_step_benchmarks(args.batch, args.steps))
    finally:
        backends.set_backend(active)


if __name__ == "__main__":
    main()
