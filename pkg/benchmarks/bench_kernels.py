"""Benchmark the compiled kernels against the NumPy fallback.

Times the two weighted-likelihood kernels at MCMC-realistic sizes and a
short end-to-end sampling run under each backend. Run from the repository
root:

    python3 benchmarks/bench_kernels.py [--repeats 5]

The pure-Python numbers come from a subprocess with
``SVYBAYES_PURE_PYTHON=1`` so both backends are measured in the same
build.
"""

import argparse
import json
import os
import subprocess
import sys
import time
import timeit

import numpy as np

BENCH_SIZES = ((500, 2), (2000, 4), (183, 3))


def bench_kernels(repeats):
    from svybayes import _kernels

    rng = np.random.default_rng(0)
    rows = []
    for n, p in BENCH_SIZES:
        X = np.ascontiguousarray(rng.normal(size=(n, p)))
        y = (rng.uniform(size=n) < 0.5).astype(float)
        w = rng.uniform(0.5, 2.0, n)
        beta = rng.normal(size=p)
        y_con = X @ beta + rng.normal(size=n)

        loops = max(200, int(2e6 / n))
        t_logit = min(
            timeit.repeat(
                lambda: _kernels.logit_loglik_grad(X, y, w, beta),
                number=loops, repeat=repeats,
            )
        ) / loops
        t_normal = min(
            timeit.repeat(
                lambda: _kernels.normal_loglik_grad(X, y_con, w, beta, 1.3),
                number=loops, repeat=repeats,
            )
        ) / loops
        rows.append({"n": n, "p": p,
                     "logit_us": t_logit * 1e6, "normal_us": t_normal * 1e6})
    return rows


def bench_sampler():
    from svybayes.models import BernoulliLogit
    from svybayes.sampler import SamplerControl, sample_pseudo_posterior

    rng = np.random.default_rng(1)
    n = 500
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = (rng.uniform(size=n) < 0.4).astype(float)
    family = BernoulliLogit(X, y, np.ones(n))
    ctrl = SamplerControl(iter=2000, warmup=1000, seed=3)
    start = time.perf_counter()
    sample_pseudo_posterior(family, ctrl)
    return time.perf_counter() - start


def run(repeats):
    from svybayes import _kernels

    return {
        "backend": _kernels.BACKEND,
        "kernels": bench_kernels(repeats),
        "sampler_2000_iter_s": bench_sampler(),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--inner", action="store_true",
                        help="print JSON for the current backend and exit")
    args = parser.parse_args()

    if args.inner:
        print(json.dumps(run(args.repeats)))
        return

    results = {}
    for backend, env_value in (("compiled", "0"), ("python", "1")):
        env = dict(os.environ, SVYBAYES_PURE_PYTHON=env_value)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--inner", "--repeats", str(args.repeats)],
            env=env, capture_output=True, text=True, check=True,
        )
        payload = json.loads(out.stdout)
        results[payload["backend"]] = payload

    if "compiled" not in results:
        print("compiled backend unavailable; showing python backend only")

    for name, payload in results.items():
        print(f"\n== backend: {name} ==")
        for row in payload["kernels"]:
            print(f"  n={row['n']:5d} p={row['p']}  "
                  f"logit {row['logit_us']:8.2f} us   "
                  f"normal {row['normal_us']:8.2f} us")
        print(f"  sampler (2000 iterations, n=500 logistic): "
              f"{payload['sampler_2000_iter_s']:.2f} s")

    if {"compiled", "python"} <= results.keys():
        print("\n== speedups (python / compiled) ==")
        for row_c, row_p in zip(results["compiled"]["kernels"],
                                results["python"]["kernels"]):
            print(f"  n={row_c['n']:5d} p={row_c['p']}  "
                  f"logit {row_p['logit_us'] / row_c['logit_us']:5.1f}x   "
                  f"normal {row_p['normal_us'] / row_c['normal_us']:5.1f}x")
        ratio = (results["python"]["sampler_2000_iter_s"]
                 / results["compiled"]["sampler_2000_iter_s"])
        print(f"  sampler end-to-end: {ratio:.1f}x")


if __name__ == "__main__":
    main()
