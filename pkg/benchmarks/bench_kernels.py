"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Prints one line per kernel with the best-of-N wall time of each available
backend and the speedup. Inputs are seeded, so repeated runs time the same work.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from riskfair._backend import available_backends


def _cases(scale: float, rng: np.random.Generator):
    n_pava = int(200_000 * scale)
    y = rng.random(n_pava)
    w = rng.uniform(0.5, 2.0, n_pava)

    n_auc = int(200_000 * scale)
    s = rng.random(n_auc).round(3)  # plenty of ties
    lab = (rng.random(n_auc) < s).astype(float)

    n_knn = int(2_000 * scale)
    Xk = rng.random((n_knn, 12))

    n_mlp, d, h = int(20_000 * scale), 12, 64
    Xm = rng.normal(size=(n_mlp, d))
    ym = (rng.random(n_mlp) < 0.3).astype(float)
    W1 = rng.normal(scale=0.1, size=(d, h))
    b1 = np.zeros(h)
    w2 = rng.normal(scale=0.1, size=h)
    b2 = np.zeros(1)
    order = rng.permutation(n_mlp).astype(np.intp)

    def sgd(k):
        # fresh copies so every repeat does identical work
        p = [W1.copy(), b1.copy(), w2.copy(), b2.copy()]
        v = [np.zeros_like(a) for a in p]
        k.mlp_sgd_epoch(*p, *v, Xm, ym, order, 64, 0.01, 0.9, 1e-4)

    return [
        (f"pava n={n_pava}", lambda k: k.pava(y, w)),
        (f"weighted_auc n={n_auc}", lambda k: k.weighted_auc(s, lab, 1.0 - lab)),
        (f"knn_indices n={n_knn} k=5", lambda k: k.knn_indices(Xk, 5)),
        (f"mlp_loss_grad n={n_mlp} h={h}", lambda k: k.mlp_loss_grad(W1, b1, w2, 0.0, Xm, ym, 1e-4)),
        (f"mlp_sgd_epoch n={n_mlp} h={h} batch=64", sgd),
    ]


def _best(fn, kern, repeat: int) -> float:
    fn(kern)  # warm-up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(kern)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply all problem sizes")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    names = [k.NAME for k in backends]
    if len(backends) == 1:
        print("compiled extension not built; timing the python backend only")
    print(f"{'kernel':<40}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in _cases(args.scale, np.random.default_rng(args.seed)):
        times = [_best(fn, k, args.repeat) for k in backends]
        line = f"{label:<40}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) > 1:
            line += f"{times[-1] / times[0]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
