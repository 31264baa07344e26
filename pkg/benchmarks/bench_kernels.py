"""Compiled vs pure-Python kernels on the workloads the pipeline actually runs.

    python3 benchmarks/bench_kernels.py [--repeat N]

The compiled module is imported directly; the fallback is ``_pykernels``.
"""

import argparse
import timeit

import numpy as np

from lanecoop import _pykernels
from lanecoop.planner import MpcConfig, sigmoid_path

try:
    from lanecoop import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def workloads():
    rng = np.random.default_rng(0)
    signal = np.cumsum(rng.normal(size=2000))
    cfg = MpcConfig()
    path = sigmoid_path(0.0, 1.8, 60.0, 3.6)
    p = cfg.pack(path, 12.0)
    s0 = np.array([0.0, 1.8, 0.0, 12.0])
    u = np.ascontiguousarray(rng.normal(scale=0.1, size=2 * cfg.horizon))
    lines = np.ascontiguousarray(np.arange(4) * 3.6576)
    obs = np.ascontiguousarray(np.column_stack([30 + np.arange(cfg.horizon), np.full(cfg.horizon, 5.4)]).ravel())
    return {
        "rolling_median(2000, w=51)": lambda k: k.rolling_median(signal, 51),
        "mpc_cost(H=20, 1 obstacle)": lambda k: k.mpc_cost(s0, u, p, lines, obs, 1),
        "mpc_gradient(H=20, 1 obstacle)": lambda k: k.mpc_gradient(s0, u, p, lines, obs, 1, 1e-6),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':34s}" + "".join(f"{n:>14s}" for n, _ in backends) + ("     speedup" if _ckernels else ""))
    for name, fn in workloads().items():
        times = []
        for _, mod in backends:
            number = 3 if mod is _pykernels else 50
            t = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            times.append(t)
        row = f"{name:34s}" + "".join(f"{t * 1e3:11.3f} ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)
    if _ckernels is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
