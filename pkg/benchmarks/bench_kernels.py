"""Benchmark the hot kernels on both backends.

Runs each workload in the current process (numba by default) and in a
subprocess with VIABQT_NUMBA=0 (pure-Python fallback), printing a timing
table. Usage:

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOADS = """
import json
import time

import numpy as np

from viab_qt import _kernels


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(repeats):
    rng = np.random.default_rng(123)

    # batched PSD factorization, the trajectory-stepping hot path:
    # mixed full-rank / rank-deficient 2x2 covariances
    A = rng.standard_normal((200_000, 2, 1))
    low = np.einsum("bij,bkj->bik", A, A)
    B = rng.standard_normal((200_000, 2, 2))
    full = np.einsum("bij,bkj->bik", B, B) + 0.5 * np.eye(2)

    # symmetric square roots, the coupled-sampling hot path
    C = rng.standard_normal((200_000, 2, 1))
    rank1 = np.einsum("bij,bkj->bik", C, C)

    # level-set projection Newton solve
    pts = rng.standard_normal((20_000, 3)) * 2.0
    sphere = np.array([1.0, 1.0, 0.0, 0.0, 0.0])

    # warm-up (compilation time must not pollute the table)
    _kernels.factor_psd_batch(low[:10])
    _kernels.sqrt_psd_batch(rank1[:10])
    _kernels.project_levelset_batch(pts[:10], 0, sphere)

    results = {
        "backend": _kernels.backend_name(),
        "factor_psd_rank_deficient_200k":
            timed(lambda: _kernels.factor_psd_batch(low), repeats),
        "factor_psd_full_rank_200k":
            timed(lambda: _kernels.factor_psd_batch(full), repeats),
        "sqrt_psd_200k":
            timed(lambda: _kernels.sqrt_psd_batch(rank1), repeats),
        "levelset_project_20k":
            timed(lambda: _kernels.project_levelset_batch(pts, 0, sphere),
                  repeats),
    }
    print(json.dumps(results))


main(REPEATS)
"""


def run_backend(numba_flag: str, repeats: int) -> dict:
    env = dict(os.environ, VIABQT_NUMBA=numba_flag)
    code = WORKLOADS.replace("REPEATS", str(repeats))
    proc = subprocess.run([sys.executable, "-c", code], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    print("benchmarking numba backend ...", flush=True)
    t0 = time.perf_counter()
    fast = run_backend("1", args.repeats)
    print(f"  done in {time.perf_counter() - t0:.1f}s")
    print("benchmarking numpy fallback ...", flush=True)
    t0 = time.perf_counter()
    slow = run_backend("0", args.repeats)
    print(f"  done in {time.perf_counter() - t0:.1f}s")

    assert fast.pop("backend") == "numba", "numba backend unavailable"
    slow.pop("backend")
    width = max(len(k) for k in fast)
    print(f"\n{'workload':<{width}}  {'numba':>10}  {'numpy':>10}  speedup")
    for key in fast:
        ratio = slow[key] / fast[key] if fast[key] > 0 else float("inf")
        print(f"{key:<{width}}  {fast[key]:>9.4f}s  {slow[key]:>9.4f}s  "
              f"{ratio:>6.1f}x")


if __name__ == "__main__":
    main()
