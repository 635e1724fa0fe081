"""Time the numba kernels against their numpy counterparts on Pima.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3] [--out timings.json]

Each pair is run on identical inputs; the script checks the outputs agree
before reporting the best-of-``repeat`` wall time and the speed-up.
"""
import argparse
import json
import time

import numpy as np

from binbayes import kernels
from binbayes.datasets import load_pima
from binbayes.ep import ep_fit, init_state
from binbayes.model import PosteriorTarget, default_prior


def best_time(fn, repeat):
    out = fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    d = load_pima()
    t = PosteriorTarget(d, default_prior(d.p, "cauchy"), "logit")
    X, y, link, pk, ps = t.kernel_args()
    q = ep_fit(t)[0]
    rng = np.random.default_rng(0)
    B = np.ascontiguousarray(q.sample(20000, rng))
    T = 5000
    inc = np.ascontiguousarray(rng.standard_normal((T, t.p)) @ (0.7 * q.cholesky()).T)
    log_u = np.log(rng.random(T))
    W = rng.random(100000)
    W /= W.sum()
    pts = np.ascontiguousarray(rng.integers(0, 2**32, size=(2**14, 8)).astype(np.uint64))
    gh_t, gh_lw = kernels.gauss_hermite(64)
    order = np.arange(t.n, dtype=np.int64)

    def ep_args():
        s = init_state(t)
        return (X, y, link, s.tau.copy(), s.nu.copy(), np.ascontiguousarray(s.cov),
                np.ascontiguousarray(s.mean), 1.0, gh_t, gh_lw, order)

    beta = np.ascontiguousarray(q.mean)
    return {
        "loglik_batch (20000 x Pima)": (kernels._loglik_batch_nb, kernels._loglik_batch_np,
                                        lambda f: f(X, y, B, link)),
        "logpost_grad_point (x1000)": (kernels._logpost_grad_point_nb, kernels._logpost_grad_point_np,
                                       lambda f: [f(beta, X, y, link, pk, ps) for _ in range(1000)][-1][1]),
        "rwmh_chain (T=5000)": (kernels._rwmh_chain_nb, kernels._rwmh_chain_np,
                                lambda f: f(beta, inc, log_u, X, y, link, pk, ps)[0]),
        "ep_sweep (one pass)": (kernels._ep_sweep_nb, kernels._ep_sweep_np,
                                lambda f: (lambda a: (f(*a), a[5])[1])(ep_args())),
        "systematic_counts (N=1e5)": (kernels._systematic_counts_nb, kernels._systematic_counts_np,
                                      lambda f: f(W, 0.37, W.size)),
        "owen_scramble (2^14 x 8)": (kernels._owen_nb, kernels._owen_np,
                                     lambda f: f(pts, np.uint64(12345))),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    rows = []
    print(f"{'kernel':32s} {'numba s':>10s} {'numpy s':>10s} {'speed-up':>9s}  agree")
    for name, (nb, npf, call) in cases().items():
        t_nb, out_nb = best_time(lambda: call(nb), args.repeat)
        t_np, out_np = best_time(lambda: call(npf), args.repeat)
        agree = bool(np.allclose(np.asarray(out_nb, float), np.asarray(out_np, float), rtol=1e-8, atol=1e-10))
        rows.append({"kernel": name, "numba_seconds": t_nb, "numpy_seconds": t_np,
                     "speedup": t_np / t_nb, "agree": agree})
        print(f"{name:32s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:9.1f}  {agree}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
