#!/usr/bin/env python3
"""Benchmark the compiled resampling kernel against the numpy fallback.

Times the raw kernel on inner-loop shaped inputs and the full nested
bootstrap with each backend patched in, verifying on the way that both
produce identical results.

Run:  python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

import upliftband._kernels as kernels
from upliftband import BootstrapConfig, Dataset, nested_bootstrap
from upliftband._kernels import available_backends
from upliftband._streams import derive_key, stream


def _time(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_kernel() -> None:
    impls = available_backends()
    print(f"kernel backends: {', '.join(impls)} (selected: {kernels.BACKEND})")
    print(f"{'shape (n, D, S, G, N)':<34} " + " ".join(f"{name:>12}" for name in impls)
          + f" {'speedup':>9}")
    rng = stream(derive_key(1))
    shapes = [
        (220, 10, 2, 20, 20_000),    # tight sample, desk population
        (2_200, 10, 2, 20, 20_000),  # reference desk workload
        (2_200, 10, 2, 20, 200_000),
        (22_000, 10, 2, 20, 200_000),
        (120_000, 2, 3, 20, 600_000),
    ]
    for n, D, S, G, N in shapes:
        counts = rng.multinomial(N, np.ones(n) / n, size=D).astype(np.int64)
        orders = np.stack([rng.permutation(n) for _ in range(S)]).astype(np.int64)
        treatment = rng.integers(0, 2, n).astype(np.int8)
        outcome = rng.integers(0, 2, n).astype(np.float64)
        ks = np.maximum(1, (np.arange(1, G + 1) * N) // G).astype(np.int64)
        times = {}
        results = {}
        for name, impl in impls.items():
            results[name] = impl(counts, orders, treatment, outcome, ks)
            times[name] = _time(lambda impl=impl: impl(counts, orders, treatment, outcome, ks))
        names = list(impls)
        if len(names) == 2:
            a, b = (results[n_] for n_ in names)
            assert np.array_equal(a, b, equal_nan=True), "backends disagree"
            speedup = times[names[0]] / times[names[1]]
        else:
            speedup = float("nan")
        label = f"({n}, {D}, {S}, {G}, {N})"
        print(f"{label:<34} "
              + " ".join(f"{times[name] * 1e3:>10.2f}ms" for name in impls)
              + f" {speedup:>8.1f}x")


def bench_nested_bootstrap() -> None:
    rng = stream(derive_key(2))
    n, N = 2_200, 20_000
    sample = Dataset(
        ids=np.arange(n, dtype=np.int64),
        treatment=rng.permutation(np.repeat([0, 1], n // 2)).astype(np.int8),
        outcome=rng.integers(0, 2, n).astype(float),
        scores=rng.random((n, 2)),
        observed=np.ones(n, dtype=bool),
    )
    p = np.where(rng.random(n) < 0.9, 1.0, 0.01)
    config = BootstrapConfig(n_outer=100, n_inner=10, seed=3)
    print(f"\nnested bootstrap end to end (n={n}, N={N}, B=100, D=10, S=2):")
    reference = None
    selected = kernels.curve_gains_from_counts
    try:
        for name, impl in available_backends().items():
            kernels.curve_gains_from_counts = impl
            started = time.perf_counter()
            ensemble = nested_bootstrap(sample, p, N, config)
            elapsed = time.perf_counter() - started
            if reference is None:
                reference = ensemble.gains
            else:
                assert np.array_equal(reference, ensemble.gains, equal_nan=True)
            print(f"  {name:>8}: {elapsed:6.2f}s")
    finally:
        kernels.curve_gains_from_counts = selected


if __name__ == "__main__":
    bench_kernel()
    bench_nested_bootstrap()
