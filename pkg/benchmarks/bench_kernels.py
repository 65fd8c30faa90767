"""Compiled kernels against the numpy fallback.

Micro timings call both kernel modules directly. The end-to-end timing
(probit fit plus a short training run) runs in a subprocess per backend,
because the backend is fixed when ``heckman_fa.kernels`` is imported.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from heckman_fa import _pykernels

try:
    from heckman_fa import _ckernels
except ImportError:  # extension not built
    _ckernels = None

END_TO_END = """
import time
from heckman_fa import kernels
from heckman_fa.config import RunConfig
from heckman_fa.data import synthesize, SyntheticSpec
from heckman_fa.dataset import FeatureMask
from heckman_fa.selection import fit_probit, fit_heckman
from heckman_fa.assignment import train_assignment
K = 10
spec = SyntheticSpec(n={n}, K=K, true_mask=FeatureMask.from_indices(range(6), K),
                     beta=[1] + [0.5] * 6 + [0] * 4, gamma=[0.2] + [0.3] * 8 + [0.9] * 2,
                     rho=0.5, sigma=1.0)
data, _ = synthesize(spec, 0)
t0 = time.perf_counter()
probit = fit_probit(data)
fit_heckman(data, spec.true_mask, probit)
train_assignment(data, RunConfig(T=50, rho_min=-1, rho_max=1), probit)
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def micro(n, repeat):
    rng = np.random.default_rng(0)
    K = 10
    a = rng.normal(scale=4, size=n)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, K))])
    s = (rng.random(n) < 0.6).astype(np.int8)
    g = rng.normal(scale=0.3, size=K + 1)
    r = rng.normal(size=n)
    idx = np.arange(0, K, 2)
    cases = {
        "norm_cdf": lambda m: m.norm_cdf(a),
        "inverse_mills": lambda m: m.inverse_mills(a),
        "probit_derivatives": lambda m: m.probit_derivatives(X, s, g),
        "sign_colsum": lambda m: m.sign_colsum(X, r),
        "masked_qr": lambda m: m.masked_qr(X[:, 1:], idx, np.abs(a), r),
    }
    print(f"{'kernel':<20}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, call in cases.items():
        tp = _best(lambda: call(_pykernels), repeat) * 1e3
        if _ckernels is None:
            print(f"{name:<20}{tp:12.3f}{'n/a':>12}{'':>10}")
            continue
        tc = _best(lambda: call(_ckernels), repeat) * 1e3
        print(f"{name:<20}{tp:12.3f}{tc:12.3f}{tp / tc:10.2f}")


def end_to_end(n):
    print(f"\nprobit + two-step fit + 50 training epochs, n={n}")
    for flag in ("1", "0"):
        env = os.environ | {"HECKMAN_FA_PURE_PYTHON": flag}
        out = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"{out[0]:<8}{float(out[1]):8.3f} s")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    micro(args.n, args.repeat)
    end_to_end(args.n)


if __name__ == "__main__":
    main()
