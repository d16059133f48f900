"""Time the numba and numpy forms of each hot kernel on representative inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once (so numba compilation is excluded), then timed
as the best of ``--repeat`` runs. Outputs are checked for agreement first.
"""
import argparse
import timeit

import numpy as np

from dualaif import _kernels as K

PARAMS = (1005.0, 2.0e6, 50.0, 102.0, 300.0)


def thermal_inputs(rng, n=288):
    return (24.0, rng.uniform(0.0, 0.3, n), rng.uniform(10.0, 25.0, n), rng.uniform(0.0, 5.0, n),
            rng.uniform(0.0, 0.05, n), rng.uniform(20.0, 36.0, n))


def cases(rng):
    thermal = thermal_inputs(rng)
    target = rng.uniform(22.0, 26.0, 288)
    terms = rng.standard_normal((4, 9**3, 27))
    return [
        ("rollout (288 steps)", K.rollout_nb, K.rollout_np, thermal + PARAMS),
        ("horizon_grad (288 steps)", K.horizon_grad_nb, K.horizon_grad_np, thermal + (target, 4.0) + PARAMS),
        ("leaf_sums (27^4 leaves)", K.leaf_sums_nb, K.leaf_sums_np, (terms, 4)),
    ]


def _first(x):
    return x[0] if isinstance(x, tuple) else x


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, nb, np_, inputs in cases(rng):
        a, b = nb(*inputs), np_(*inputs)  # warm-up and agreement check
        np.testing.assert_allclose(_first(a), _first(b), rtol=1e-8, atol=1e-9)
        loops = 20 if "leaf" not in name else 3
        t_nb = min(timeit.repeat(lambda: nb(*inputs), number=loops, repeat=args.repeat)) / loops
        t_np = min(timeit.repeat(lambda: np_(*inputs), number=loops, repeat=args.repeat)) / loops
        print(f"{name:<28}{t_nb * 1e3:>10.3f}ms{t_np * 1e3:>10.3f}ms{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
