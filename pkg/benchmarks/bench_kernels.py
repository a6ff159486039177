"""Time the compiled core against the pure-Python fallback on each hot loop.

    python3 benchmarks/bench_kernels.py [--repeat R]

Workloads are sized so the Python side finishes in about a second.  Both
backends are fed identical seeds and the results are checked for equality
before timing is reported.
"""
from __future__ import annotations

import argparse
import math
import time

import numpy as np

from fslab import saw, spectral, walks
from fslab.walks import EnsembleSpec, StepKernel, TiltPotential


def _best(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def heat_bath(backend):
    spec = EnsembleSpec(2, 60, (0, 0), (0, 0), StepKernel.simple(), TiltPotential.power_law(0.05), 40)
    return walks.mcmc_histograms(spec, 1, 400, burn_in=0, backend=backend).counts


def euler_maruyama(backend):
    basis = _basis()
    return spectral.simulate_diffusion(basis, 2, [2.0, 1.0], 1e-3, 20_000, 1, backend=backend).states


def bridges(backend):
    ens = saw.TiltedSawEnsemble(1.5, 0.0, 3, 0, 0, 14)
    return saw.enumerate_bridges(ens, backend=backend).counts


_BASIS = []


def _basis():
    if not _BASIS:
        pot = spectral.Potential.power(1.0, 1.0, math.sqrt(2.0))
        _BASIS.append(spectral.solve_spectrum(pot, 20.0, 2e-3, 2))
    return _BASIS[0]


WORKLOADS = {
    "heat-bath sweeps (n=2, N=60, 400 sweeps)": heat_bath,
    "Euler-Maruyama (n=2, 2e4 steps)": euler_maruyama,
    "bridge DFS (N=3, length <= 14)": bridges,
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    _basis()
    print(f"{'workload':<44} {'python s':>10} {'compiled s':>11} {'speedup':>8}")
    for name, fn in WORKLOADS.items():
        tp, a = _best(lambda: fn("python"), args.repeat)
        tc, b = _best(lambda: fn("compiled"), args.repeat)
        if not np.array_equal(a, b):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<44} {tp:>10.4f} {tc:>11.4f} {tp / tc:>7.0f}x")


if __name__ == "__main__":
    main()
