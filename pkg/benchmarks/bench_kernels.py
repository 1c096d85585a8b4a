"""Time the numpy and compiled kernels on training-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from cgsnn import _kernels_py

try:
    from cgsnn import _kernels_cy
except ImportError:  # extension not built
    _kernels_cy = None


def multi_case(rng: np.random.Generator, batch: int = 16, sizes=(27, 100, 100, 2), T: int = 10):
    inputs = rng.uniform(0, 1, (batch, sizes[0]))
    weights = [rng.normal(0, 2 / np.sqrt(a), (b, a)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.full(b, -0.2) for b in sizes[1:]]
    gates = [None] * (len(sizes) - 2)
    grad = rng.normal(size=(batch, sizes[-1]))
    return inputs, weights, biases, gates, T, grad


def causal_case(rng: np.random.Generator, batch: int = 50, n_in: int = 27, n_out: int = 27):
    weights = rng.uniform(0, 8 / n_in, (n_out, n_in))
    z_in = np.exp(rng.uniform(0, 2, (batch, n_in)))
    z_in[:, -1] = np.inf
    return weights, z_in


def bench(mod, repeats: int) -> dict[str, float]:
    rng = np.random.default_rng(0)
    inputs, weights, biases, gates, T, grad = multi_case(rng)
    u_pre, spikes = mod.multi_forward(inputs, weights, biases, gates, T, 1.0, 1.0)
    w, z = causal_case(rng)
    z_out, n_c, order = mod.causal_forward(w, z)
    g_out = np.where(np.isfinite(z_out), 1.0, 0.0)
    calls = {
        "multi_forward": lambda: mod.multi_forward(inputs, weights, biases, gates, T, 1.0, 1.0),
        "multi_backward": lambda: mod.multi_backward(inputs, weights, u_pre, spikes, gates, grad, 1.0, 1.0, 2.0),
        "causal_forward": lambda: mod.causal_forward(w, z),
        "causal_backward": lambda: mod.causal_backward(w, z, z_out, n_c, order, g_out),
    }
    return {name: min(timeit.repeat(fn, number=20, repeat=repeats)) / 20 * 1e3 for name, fn in calls.items()}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    py = bench(_kernels_py, args.repeats)
    cy = bench(_kernels_cy, args.repeats) if _kernels_cy is not None else None
    print(f"{'kernel':<16}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, t in py.items():
        if cy is None:
            print(f"{name:<16}{t:>10.3f}{'n/a':>11}{'':>9}")
        else:
            print(f"{name:<16}{t:>10.3f}{cy[name]:>11.3f}{t / cy[name]:>8.1f}x")


if __name__ == "__main__":
    main()
