"""Time the python and compiled solver kernels on the same problems.

    python benchmarks/bench_kernels.py [--n 500] [--h 100] [--repeat 3]
"""
import argparse
import math
import time

import numpy as np

from issuerel.classifiers import logistic_lambda_max
from issuerel.classifiers.kernels import backends


def problem(n, h, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, h))
    y = np.where(X[:, :5].sum(axis=1) + rng.standard_normal(n) > 0, 1.0, -1.0)
    return np.asfortranarray(X - X.mean(axis=0)), y


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--h", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    X, y = problem(args.n, args.h, args.seed)
    lam = 0.2 * logistic_lambda_max(X, y)
    b0 = math.log(np.sum(y > 0) / np.sum(y < 0))
    mods = backends()
    print(f"n={args.n} h={args.h} lam={lam:.4g}; backends: {', '.join(mods)}")
    results = {}
    for name, mod in mods.items():
        t_cd, cd = best_of(lambda: mod.cd_logistic_l1(X, y, lam, np.zeros(args.h), b0, 1e-8, 200),
                           args.repeat)
        t_sg, sg = best_of(lambda: mod.prox_subgradient_hinge(X, y, lam, True, np.zeros(args.h), 0.0,
                                                              2000, 1.0), args.repeat)
        results[name] = (t_cd, cd, t_sg, sg)
        print(f"{name:>9}  L1-logistic {t_cd * 1e3:9.1f} ms  ({cd[2]} outer steps, "
              f"objective {cd[4][-1]:.10f})   hinge subgradient {t_sg * 1e3:9.1f} ms  "
              f"(objective {sg[2]:.10f})")
    if len(results) == 2:
        py, cc = results["python"], results["compiled"]
        print(f"speedup  L1-logistic x{py[0] / cc[0]:.1f}   hinge subgradient x{py[2] / cc[2]:.1f}")
        print(f"max weight difference  {np.max(np.abs(np.asarray(py[1][0]) - np.asarray(cc[1][0]))):.2e}")


if __name__ == "__main__":
    main()
