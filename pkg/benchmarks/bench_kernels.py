"""Compare the compiled and numpy kernels on the hot path.

    python benchmarks/bench_kernels.py [--repeat 5] [--full]

Times one mini-batch gradient (default 10-[32,32]-2 network, batch 32),
a full-dataset loss, and one client's local round (K=10 variants, E=5).
``--full`` adds the whole default 20-round training run. The wide case
(784-[64]-10, MNIST-shaped) is where numpy's BLAS overtakes the per-example
compiled loop.
"""
import argparse
import time

import numpy as np

from qefl import _backend
from qefl.data import gen_synthetic
from qefl.evolution import MutationConfig
from qefl.config import RunConfig, build_run
from qefl.federation import ClientState, RoundConfig, client_round, run_training
from qefl.nn import Architecture, init_params


def best_of(fn, repeat, number):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        for _ in range(number):
            fn()
        times.append((time.perf_counter() - t) / number)
    return min(times)


def _fmt(seconds):
    return f"{seconds * 1e3:>12.1f}ms" if seconds > 0.1 else f"{seconds * 1e6:>12.1f}us"


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--full", action="store_true", help="also time the default training run")
    args = p.parse_args()

    arch = Architecture(10, (32, 32), 2)
    theta = init_params(arch, 0)
    data = gen_synthetic(700, 1)
    Xb, yb = data.X[:32].copy(), data.y[:32].copy()
    client = ClientState(0, data.subset(range(140)))
    cfg = RoundConfig(mutation=MutationConfig(0.1, 10))
    wide = Architecture(784, (64,), 10)
    wide_theta = init_params(wide, 0)
    wrng = np.random.default_rng(2)
    Xw, yw = wrng.random((32, 784)), wrng.integers(0, 10, 32)

    print(f"{'case':<28}" + "".join(f"{name:>14}" for name in _backend.KERNELS))
    cases = {
        "grad, batch 32": (lambda k: lambda: k.loss_and_grad(theta, arch.dims, Xb, yb), 2000),
        "loss, 700 examples": (lambda k: lambda: k.batch_mean_loss(theta, arch.dims, data.X, data.y), 200),
        "client round (K=10, E=5)": (lambda k: lambda: client_round(arch, theta, client, cfg, 1, kernels=k), 3),
        "wide grad, batch 32": (lambda k: lambda: k.loss_and_grad(wide_theta, wide.dims, Xw, yw), 200),
    }
    if args.full:
        run_cfg = RunConfig()
        r_arch, clients, _, test = build_run(run_cfg)
        theta0 = init_params(r_arch, 0)
        cases["default run (R=20)"] = (
            lambda k: lambda: run_training(r_arch, theta0, clients, run_cfg.round_config(), test, kernels=k),
            1,
        )
    results = {}
    for label, (make, number) in cases.items():
        row = {name: best_of(make(k), args.repeat, number) for name, k in _backend.KERNELS.items()}
        results[label] = row
        print(f"{label:<28}" + "".join(_fmt(row[n]) for n in _backend.KERNELS))
    if "c" in _backend.KERNELS:
        for label, row in results.items():
            print(f"speedup {label}: {row['python'] / row['c']:.1f}x")


if __name__ == "__main__":
    main()
