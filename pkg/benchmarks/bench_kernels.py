"""Time the compiled likelihood kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Reports the per-call time of ``panel_loglik`` and ``posterior_moments`` at a
few panel sizes, plus one full model fit under each backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from stsfa import _kernels_py
from stsfa._backend import compiled_available
from stsfa.frontier import decay_profile

SIZES = [(100, 5), (400, 5), (2000, 10)]


def kernel_table(repeat: int):
    from stsfa import _kernels
    rng = np.random.default_rng(0)
    print(f"{'N':>6} {'T':>4}  {'kernel':<18}{'cython us':>12}{'numpy us':>12}{'speedup':>9}")
    for n, t in SIZES:
        y = rng.normal(size=(n, t))
        X = np.ones((n, t, 2))
        X[:, :, 1] = rng.normal(size=(n, t))
        beta = np.array([1.0, 0.5])
        h = decay_profile(0.05, t)
        dl = rng.uniform(0.3, 1.0, n)
        eps = y - X @ beta
        cases = {
            "panel_loglik": lambda m: m.panel_loglik(y, X, beta, h, dl, 0.3, 0.8, 1),
            "posterior_moments": lambda m: m.posterior_moments(eps, h, dl, 0.3, 0.8, 1),
        }
        for name, call in cases.items():
            tc = min(timeit.repeat(lambda: call(_kernels), number=repeat, repeat=3)) / repeat
            tp = min(timeit.repeat(lambda: call(_kernels_py), number=repeat, repeat=3)) / repeat
            print(f"{n:>6} {t:>4}  {name:<18}{tc * 1e6:>12.1f}{tp * 1e6:>12.1f}{tp / tc:>8.1f}x")


FIT_SNIPPET = """
import time
from stsfa import BACKEND
from stsfa.estimator import FitOptions, ModelSpec, fit
from stsfa.montecarlo import DgpConfig, simulate_dgp
sim = simulate_dgp(DgpConfig(n=200, rho=0.4, eta=0.05, seed=1))
spec = ModelSpec.from_name("stsfa-tv")
t0 = time.perf_counter()
for _ in range(5):
    fit(spec, sim.data, sim.weights, FitOptions(std_errors=False))
print(BACKEND, (time.perf_counter() - t0) / 5)
"""


def fit_table():
    print("\nfull stsfa-tv fit, N=200, T=5 (mean of 5)")
    for pure in ("0", "1"):
        env = dict(os.environ, STSFA_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<8}{float(secs) * 1e3:>9.1f} ms")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not compiled_available():
        sys.exit("compiled kernels are not built; reinstall with Cython available")
    kernel_table(args.repeat)
    fit_table()


if __name__ == "__main__":
    main()
