#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy twins.

The backend is fixed when ``chronolint.kernels`` is imported, so each
backend runs in its own child process; the parent prints a side-by-side
table. Checksums guard that both backends computed the same answers.

Usage:
    python3 benchmarks/bench_kernels.py [--size N] [--repeat K]
"""

import argparse
import importlib.util
import json
import os
import subprocess
import sys
import time

BACKENDS = ("numpy", "numba")


def build_cases(kernels, size):
    import numpy as np

    rng = np.random.default_rng(42)
    epochs = rng.integers(0, 2**31, size=size, dtype=np.int64)
    merge_mask = rng.random(size) < 0.1
    child_idx = rng.integers(0, size, size=size, dtype=np.int64)
    deltas = rng.integers(-(10**6), 10**6, size=size, dtype=np.int64)
    bounds = np.array(
        [30, 60, 300, 1800, 3600, 21600, 86400, 604800, 2592000, 31536000],
        dtype=np.int64,
    )
    values = rng.integers(1, 10**9, size=size, dtype=np.int64)
    author_codes = np.sort(rng.integers(0, max(size // 50, 1), size=size, dtype=np.int64))
    change_epochs = np.sort(epochs)

    def mask_sum(result):
        return int(result.sum())

    def weighted_sum(result):
        return int((np.arange(result.shape[0], dtype=np.int64) * result).sum())

    return {
        "linear_out_of_order_mask": (
            kernels.linear_out_of_order_mask, (epochs, merge_mask, True), mask_sum,
        ),
        "max_parent_delta": (
            kernels.max_parent_delta, (child_idx, deltas, size), mask_sum,
        ),
        "bucket_counts": (
            kernels.bucket_counts, (values, bounds), weighted_sum,
        ),
        "changeset_breaks": (
            kernels.changeset_breaks, (author_codes, change_epochs, 180), mask_sum,
        ),
    }


def run_worker(backend: str, size: int, repeat: int) -> None:
    os.environ["CHRONOLINT_KERNELS"] = backend
    from chronolint import kernels

    if kernels.BACKEND != backend:
        raise SystemExit(f"requested {backend} but got {kernels.BACKEND}")

    results = {}
    for name, (fn, args, digest) in build_cases(kernels, size).items():
        reference = fn(*args)  # warm-up; for numba this triggers compilation
        best = float("inf")
        for _ in range(repeat):
            start = time.perf_counter()
            fn(*args)
            best = min(best, time.perf_counter() - start)
        results[name] = {"seconds": best, "checksum": digest(reference)}
    print(json.dumps({"backend": backend, "results": results}))


def collect(backend: str, size: int, repeat: int) -> dict:
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__),
         "--worker", backend, "--size", str(size), "--repeat", str(repeat)],
        capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=2_000_000,
                        help="elements per input array (default: %(default)s)")
    parser.add_argument("--repeat", type=int, default=5,
                        help="timed runs per kernel, best wins (default: %(default)s)")
    parser.add_argument("--worker", choices=BACKENDS, help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        run_worker(args.worker, args.size, args.repeat)
        return 0

    if importlib.util.find_spec("numba") is None:
        print("numba is not installed; benchmark needs both backends", file=sys.stderr)
        return 1

    print(f"timing kernels on arrays of {args.size:,} elements "
          f"(best of {args.repeat})\n")
    numpy_run, numba_run = (collect(b, args.size, args.repeat) for b in BACKENDS)

    header = f"{'kernel':<28} {'numpy':>12} {'numba':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, numpy_result in numpy_run["results"].items():
        numba_result = numba_run["results"][name]
        if numpy_result["checksum"] != numba_result["checksum"]:
            print(f"{name}: backends disagree!", file=sys.stderr)
            return 1
        ratio = numpy_result["seconds"] / numba_result["seconds"]
        print(f"{name:<28} {numpy_result['seconds']:>10.4f} s "
              f"{numba_result['seconds']:>10.4f} s {ratio:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
