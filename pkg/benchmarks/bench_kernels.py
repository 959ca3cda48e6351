"""Timing comparison of the compiled kernels against the numpy fallback.

Run as: python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 7]

Both implementations are imported side by side, so the numbers are free of
process-startup noise. Sizes default to the shape of one imputation pass on
a survey-sized dataset.
"""

import argparse
import time

import numpy as np

from ordsens._kernels import pykernels

try:
    from ordsens._kernels import _ckernels
except ImportError:
    _ckernels = None


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(n, rng):
    K = 5
    zeta = np.array([-1.0, -0.3, 0.4, 1.2])
    eta = rng.normal(size=n)
    codes = rng.integers(1, K + 1, size=n)
    mu = rng.normal(size=n)
    lo = mu - rng.uniform(0.1, 2.0, size=n)
    hi = mu + rng.uniform(0.1, 2.0, size=n)
    u = rng.uniform(size=n)
    theta = rng.normal(size=n)
    G = max(n // 200, 1)
    starts = np.linspace(0, n, G, endpoint=False).astype(np.int64)
    zc = np.ascontiguousarray(rng.normal(size=(n, 12)))
    z1 = np.ascontiguousarray(zc[:, 0])
    y = rng.integers(0, 2, size=n).astype(np.float64)
    return [
        ("cum_link_terms/probit",
         lambda k: k.cum_link_terms(eta, zeta, codes, pykernels.LINK_PROBIT)),
        ("cum_link_terms/logit",
         lambda k: k.cum_link_terms(eta, zeta, codes, pykernels.LINK_LOGIT)),
        ("truncnorm_unit", lambda k: k.truncnorm_unit(mu, lo, hi, u)),
        ("classify_smallest_k", lambda k: k.classify_smallest_k(theta, zeta)),
        ("bern_loglik_sums", lambda k: k.bern_loglik_sums(zc, y, starts)),
        ("bern_score_info", lambda k: k.bern_score_info(z1, y, starts)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(2024)
    cases = _cases(args.n, rng)

    print(f"n = {args.n}, best of {args.repeat}")
    header = f"{'kernel':26} {'numpy':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_py = _best_of(lambda: call(pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:26} {t_py * 1e3:9.2f}ms {'n/a':>10} {'':>8}")
            continue
        t_c = _best_of(lambda: call(_ckernels), args.repeat)
        print(f"{name:26} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms "
              f"{t_py / t_c:7.2f}x")
    if _ckernels is None:
        print("\ncompiled extension not available; showing numpy only")


if __name__ == "__main__":
    main()
