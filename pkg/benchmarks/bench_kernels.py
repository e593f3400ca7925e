"""Compare the compiled and numpy leader kernels.

Usage: python benchmarks/bench_kernels.py [--J 16] [--repeat 5]

Times each kernel on one lacunary realization and on a dense random tree,
and checks that both backends agree before reporting.
"""
import argparse
import timeit

import numpy as np

from pspectrum.kernels import get_backend
from pspectrum.rws import Lacunary, sample


def trees(J, seed=0):
    lac = [np.asarray(a) for a in sample(Lacunary(0.5, 0.5), J, seed).levels]
    rng = np.random.default_rng(seed)
    dense = [rng.exponential(size=1 << j) * 2.0 ** (-0.5 * j) for j in range(J + 1)]
    return {"lacunary": lac, "dense": dense}


def cases(p):
    return {
        f"leader_powers(p={p})": lambda m, lv: m.leader_powers(lv, p),
        f"leader_log_powers(p={p})": lambda m, lv: m.leader_log_powers(lv, p),
        "sup_leaders": lambda m, lv: m.sup_leaders(lv),
    }


def agree(a, b):
    return all(np.allclose(x, y, rtol=1e-12, atol=0, equal_nan=True)
               for u, v in zip(a, b) for x, y in zip(u, v))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--J", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--p", type=float, default=2.0)
    args = ap.parse_args(argv)
    py = get_backend("python")
    try:
        cy = get_backend("cython")
    except ImportError:
        print("compiled kernels not built; only the numpy backend is available")
        cy = None
    print(f"J={args.J} ({(1 << (args.J + 1)) - 1} nodes), best of {args.repeat}")
    print(f"{'tree':<10}{'kernel':<28}{'numpy [ms]':>12}{'cython [ms]':>13}{'speed-up':>10}")
    for name, lv in trees(args.J).items():
        for label, fn in cases(args.p).items():
            t_py = min(timeit.repeat(lambda: fn(py, lv), number=1, repeat=args.repeat))
            if cy is None:
                print(f"{name:<10}{label:<28}{1e3 * t_py:>12.2f}{'-':>13}{'-':>10}")
                continue
            if not agree(fn(py, lv), fn(cy, lv)):
                raise SystemExit(f"backends disagree on {name}/{label}")
            t_cy = min(timeit.repeat(lambda: fn(cy, lv), number=1, repeat=args.repeat))
            print(f"{name:<10}{label:<28}{1e3 * t_py:>12.2f}{1e3 * t_cy:>13.2f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
