"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Inputs mirror one optimizer step: a 300-slot interval, a 256-draw panel and
the default network shape.
"""

import argparse
import timeit

import numpy as np

from microopt.kernels import backends
from microopt.slicemodel import init_model


def workload(seed=0):
    rng = np.random.default_rng(seed)
    model = init_model(seed=seed)
    X = np.column_stack([rng.uniform(1, 5, 300), np.full(300, 2200.0), np.full(300, 24.0)])
    mu = rng.uniform(2, 7, 300)
    sig = rng.uniform(0.3, 0.7, 300)
    w = rng.uniform(0, 1, 300)
    w /= w.sum()
    panel = rng.standard_normal((256, 300))
    return model, X, mu, sig, w, panel


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    model, X, mu, sig, w, panel = workload()
    found = backends()
    ref = found["python"]
    rows = []
    for name, mod in found.items():
        a = mod.mlp_dist_grad(X, model.in_mean, model.in_std, model.shared, model.mean_branch, model.std_branch)
        b = ref.mlp_dist_grad(X, model.in_mean, model.in_std, model.shared, model.mean_branch, model.std_branch)
        err = max(float(np.max(np.abs(np.asarray(u) - np.asarray(v)))) for u, v in zip(a, b))
        cases = {
            "mlp_dist_grad": lambda: mod.mlp_dist_grad(X, model.in_mean, model.in_std, model.shared,
                                                       model.mean_branch, model.std_branch),
            "surrogate_reduce": lambda: mod.surrogate_reduce(mu, sig, w, panel, 4.0, 5.0),
            "strict_reduce": lambda: mod.strict_reduce(mu, sig, w, panel, 4.0),
        }
        for case, fn in cases.items():
            t = min(timeit.repeat(fn, number=args.repeat, repeat=3)) / args.repeat
            rows.append((case, name, t, err))
    print(f"{'kernel':<18}{'backend':<10}{'us/call':>12}{'speedup':>10}")
    base = {c: t for c, n, t, _ in rows if n == "python"}
    for case, name, t, err in rows:
        print(f"{case:<18}{name:<10}{t * 1e6:>12.1f}{base[case] / t:>9.2f}x")
    print(f"max |diff| vs python on mlp outputs: {max(r[3] for r in rows):.2e}")


if __name__ == "__main__":
    main()
