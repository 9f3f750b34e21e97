"""Time the numba and numpy draw kernels side by side.

    python benchmarks/bench_kernels.py [--trials N] [--repeat R]

Both backends are called directly, so the env flag does not matter here.
The first numba call (compilation or cache load) is excluded from timing.
"""
import argparse
import timeit

import numpy as np

from covlab import _accel, kernels


def bench(fn, args, repeat):
    fn(*args)  # warm up / compile
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    key = kernels.seed_key(42)
    cases = [
        ("uniform  width=2", kernels.uniform_block_np, kernels.uniform_block_nb, 2),
        ("normal   width=1", kernels.normal_block_np, kernels.normal_block_nb, 1),
        ("normal   width=4", kernels.normal_block_np, kernels.normal_block_nb, 4),
    ]
    print(f"trials={args.trials}  best of {args.repeat}  numba available: {_accel.HAS_NUMBA}")
    print(f"{'kernel':<18}{'numpy s':>10}{'numba s':>10}{'speedup':>9}  same")
    for label, np_fn, nb_fn, width in cases:
        call = (key, 0, args.trials, width)
        t_np = bench(np_fn, call, args.repeat)
        t_nb = bench(nb_fn, call, args.repeat)
        same = np.allclose(np_fn(*call), nb_fn(*call), rtol=0, atol=1e-15)
        print(f"{label:<18}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
