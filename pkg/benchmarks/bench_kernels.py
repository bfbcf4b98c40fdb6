"""Time the hot paths under the numba and the pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--seed 0]

Each case runs once untimed first so numba compilation is excluded.
"""

import argparse
import time

import numpy as np

from svrconf import _accel
from svrconf.cssp import build_problem, solve_bnb, solve_local
from svrconf.svr import SvrHyper, train
from svrconf.synth import grid_space, random_model


def cases(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(600, 6))
    y = np.sin(X).sum(1) + 0.05 * rng.normal(size=600)
    hyper = SvrHyper.of(10.0, 0.05, 0.3)

    space = grid_space([4, 4, 3, 2, 2, 2, 3, 4])
    model = random_model(rng, space, 4, 800, gamma=0.3)
    prob = build_problem(model, space, rng.normal(size=4))
    rows = space.feasible_indices()

    return {
        "smo (600 points)": lambda: train(X, y, hyper, tol=1e-4),
        f"objective_rows ({len(rows)} configs x 800 terms)": lambda: prob.objective_rows(rows),
        "branch and bound": lambda: solve_bnb(prob, 60.0),
        "local search (5 restarts)": lambda: solve_local(prob, restarts=5, seed=1),
    }


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    prev = _accel.backend()
    results = {}
    try:
        for b in backends:
            _accel.set_backend(b)
            for name, fn in cases(args.seed).items():
                results.setdefault(name, {})[b] = best_of(fn, args.repeat)
    finally:
        _accel.set_backend(prev)

    width = max(map(len, results))
    print(f"{'case':<{width}}  {'numpy s':>10}  {'numba s':>10}  {'speedup':>8}")
    for name, r in results.items():
        nb = r.get("numba")
        line = f"{name:<{width}}  {r['numpy']:>10.4f}  "
        line += f"{nb:>10.4f}  {r['numpy'] / nb:>7.1f}x" if nb else f"{'-':>10}  {'-':>8}"
        print(line)


if __name__ == "__main__":
    main()
