"""Compare the compiled tree grower against the numpy fallback.

    python benchmarks/bench_kernels.py --n 2000 --repeat 3

Both backends train the same forest on a synthetic benchmark; the script
reports the best wall time per backend and checks that the saved models are
byte-identical.
"""

import argparse
import time

import numpy as np

from fallrisk.features import FeatureSet, Scaling, balance_arrays
from fallrisk.gbdt import Hyperparams, _backend, fit_arrays, save_model
from fallrisk.synthetic import generate_dataset


def best_time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000, help="scenes in the benchmark dataset")
    ap.add_argument("--feature-set", default="kp-knee-head", choices=[fs.value for fs in FeatureSet])
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args(argv)

    fs = FeatureSet(args.feature_set)
    ds = generate_dataset(args.n, 0.5, seed=args.seed)
    X, S = ds.feature_matrix(fs)
    bal = balance_arrays(X, ds.y, np.array(ds.source_ids, dtype=object), S, 2.0, [args.seed, 0])
    hp = Hyperparams(n_trees=args.trees)
    print(f"training set: {bal.X.shape[0]} rows x {bal.X.shape[1]} features, {args.trees} trees")

    backends = ["python"] + (["cython"] if "cython" in _backend.available() else [])
    if len(backends) == 1:
        print("compiled kernel not built; timing the fallback only")
    results = {}
    for name in backends:
        fit = lambda: fit_arrays(bal.X, bal.y, hp, args.seed, fs, Scaling.fit(bal.X), backend=name)
        seconds, model = best_time(fit, args.repeat)
        results[name] = (seconds, save_model(model))
        print(f"{name:>7}: {seconds:.3f} s per fit (best of {args.repeat})")

    if len(results) == 2:
        (tp, mp), (tc, mc) = results["python"], results["cython"]
        print(f"speedup: {tp / tc:.1f}x; models identical: {mp == mc}")
        return 0 if mp == mc else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
