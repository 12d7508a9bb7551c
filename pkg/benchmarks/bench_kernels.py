"""Time the numba kernels against the numpy fallback on problem-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from slevel import _kernels
from slevel.problems import PerishableMdpSpec, gaussian_classes


def _best(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def cases(seed=0):
    rng = np.random.default_rng(seed)
    dm = gaussian_classes(30_000, 3, 50, seed=seed)
    data, indices, indptr = dm.csr()
    rows = rng.integers(0, dm.row_count, size=1000)
    W = rng.standard_normal((dm.feature_dim, 3))
    spec = PerishableMdpSpec.standard_instance(0)
    n = 50 * 200
    states = rng.uniform(0, 10, size=(n, spec.state_dim))
    actions = rng.uniform(0, 10, size=n)
    demands = np.clip(rng.normal(5, 2, size=n), 0, 10)
    knots = spec.knots()
    yield "csr_rows_matmul", (data, indices, indptr, rows, W)
    yield "csr_rows_tmatmul", (data, indices, indptr, rows, rng.standard_normal((1000, 3)), dm.feature_dim)
    yield "kahan_mean", (rng.standard_normal(1_000_000),)
    yield "mdp_transition", (states, actions, demands, spec.lifetime, spec.lead_time, spec.backlog_floor)
    yield "mdp_stage_cost", (states, actions, demands, *spec._cost_args())
    yield "perishable_basis", (states, knots)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if _kernels.numba_impl is None:
        print("numba backend unavailable; only numpy timings are shown")
    print(f"{'kernel':<18} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, call_args in cases():
        t_np = _best(getattr(_kernels.numpy_impl, name), call_args, args.repeat)
        if _kernels.numba_impl is not None:
            t_nb = _best(getattr(_kernels.numba_impl, name), call_args, args.repeat)
            print(f"{name:<18} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>8.2f}")
        else:
            print(f"{name:<18} {t_np * 1e3:>10.3f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
