"""Time the numba and numpy flavours of each hot kernel.

    python benchmarks/bench_kernels.py            # per-kernel table
    python benchmarks/bench_kernels.py --e2e      # also a bootstrap run per backend

The per-kernel table calls both variants directly in one process (numba is
warmed up first, so compile time is excluded).  ``--e2e`` runs a small
bootstrap evaluation in two subprocesses, one with
``SOCIALGAZE_DISABLE_NUMBA=1``, to show what the switch does end to end.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from socialgaze import kernels


def workloads(rng):
    flags = rng.random(90_000) < 0.3
    X = rng.normal(size=(28, 4))
    y = rng.normal(size=28)
    sample = rng.integers(0, 28, 28)
    keys = rng.random((kernels.max_tree_nodes(28, 4), 4))
    tree = kernels.build_tree_numba(X, y, sample, 4, 2, 2, keys)
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    W1 = rng.normal(size=(4, 16)) * 0.5
    heads = (rng.uniform(0, 64, 3), rng.uniform(0, 64, 3), rng.uniform(1, 8, 3), np.ones(3))
    return {
        "run_lengths (90k frames)": lambda f: f(flags),
        "build_tree (n=28, depth 4)": lambda f: f(X, y, sample, 4, 2, 2, keys),
        "tree_predict (28 rows)": lambda f: f(X, *tree),
        "lasso_cd (lam=0.05)": lambda f: f(Xc, yc, 0.05, np.zeros(4), 10_000, 1e-10),
        "svr_subgradient (2000 steps)": lambda f: f(X, y, 1.0, 0.1, 0.01, 2000, np.zeros(4), 0.0),
        "mlp_train (2000 epochs)": lambda f: f(X, y, W1.copy(), np.zeros(16), np.zeros(16), 0.0, 0.01, 2000),
        "render_gaussians (3 heads)": lambda f: f(64, *heads, True),
    }


PAIRS = {
    "run_lengths": (kernels.run_lengths_numba, kernels.run_lengths_numpy),
    "build_tree": (kernels.build_tree_numba, kernels.build_tree_numpy),
    "tree_predict": (kernels.tree_predict_numba, kernels.tree_predict_numpy),
    "lasso_cd": (kernels.lasso_cd_numba, kernels.lasso_cd_numpy),
    "svr_subgradient": (kernels.svr_subgradient_numba, kernels.svr_subgradient_numpy),
    "mlp_train": (kernels.mlp_train_numba, kernels.mlp_train_numpy),
    "render_gaussians": (kernels.render_gaussians_numba, kernels.render_gaussians_numpy),
}


def best_of(call, repeat):
    timer = timeit.Timer(call)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


E2E = """
import time, warnings
warnings.simplefilter("ignore")
from socialgaze import backend
from socialgaze.synth import SynthConfig, generate_cohort
from socialgaze.measures import compute_measures
from socialgaze.predict import ModelSpec, bootstrap_evaluate, build_feature_matrix, prepare
s = generate_cohort(28, seed=0, session_cfg=SynthConfig(duration_s=60))
data = prepare(build_feature_matrix(compute_measures(s.cohort), s.cohort.profiles))
bootstrap_evaluate(ModelSpec("RF", {"n_trees": 5}), data, B=2)  # warm-up / compile
t = time.perf_counter()
for kind in ("RF", "Lasso", "SVR", "GBT", "MLP"):
    bootstrap_evaluate(ModelSpec(kind), data, B=%d)
print(backend(), time.perf_counter() - t)
"""


def end_to_end(B):
    for flag in ("0", "1"):
        env = {**os.environ, "SOCIALGAZE_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", E2E % B], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        print(f"  {out[0]:<6} 5 models x B={B}: {float(out[1]):8.2f} s")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--e2e", action="store_true", help="also time a bootstrap run per backend")
    parser.add_argument("--B", type=int, default=20, help="replicates for --e2e")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'kernel':<30}{'numba':>12}{'numpy':>12}{'speed-up':>10}")
    for (label, call), (fast, slow) in zip(workloads(rng).items(), PAIRS.values()):
        call(fast)  # compile
        t_fast = best_of(lambda: call(fast), args.repeat)
        t_slow = best_of(lambda: call(slow), args.repeat)
        print(f"{label:<30}{t_fast * 1e3:>10.3f}ms{t_slow * 1e3:>10.3f}ms{t_slow / t_fast:>9.1f}x")
    if args.e2e:
        print("end to end:")
        end_to_end(args.B)


if __name__ == "__main__":
    main()
