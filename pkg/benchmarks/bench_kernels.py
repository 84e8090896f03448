"""Time the numba kernels against their numpy twins.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.  Both
backends are imported in the same process (the twins live side by side
in :mod:`eegconn.kernels`), so the env flag is not needed here.
"""

import argparse
import time

import numpy as np

from eegconn import kernels
from eegconn.classify import _sample_bounds


def _best(fn, args, repeat):
    fn(*args)  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def _smo_args(n, d, seed=0):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 3 == 0, 1.0, -1.0)
    X = rng.standard_normal((n, d)) + 0.5 * y[:, None]
    K = X @ X.T
    c = _sample_bounds(y, 1.0, "balanced")

    def run(smo):
        return smo(K, y, c, 1e-3, 100_000, np.empty(0), np.zeros(n), -np.ones(n), 0.0)
    return run


def cases():
    rng = np.random.default_rng(0)
    win = rng.standard_normal((120, 62, 400))
    spec = rng.standard_normal((120, 62, 8, 9)) + 1j * rng.standard_normal((120, 62, 8, 9))
    ph = np.exp(1j * rng.uniform(-np.pi, np.pi, (120, 62, 360)))
    smo = _smo_args(1200, 120)
    return [
        ("pearson 120x62x400", kernels.pearson_upper_numba, kernels.pearson_upper_numpy, (win,)),
        ("coherence 120x62", kernels.coherence_upper_numba, kernels.coherence_upper_numpy, (spec,)),
        ("plv 120x62x360", kernels.plv_upper_numba, kernels.plv_upper_numpy, (ph,)),
        ("smo n=1200", lambda: smo(kernels.smo_numba), lambda: smo(kernels.smo_numpy), ()),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'kernel':<22}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}")
    for name, fast, slow, a in cases():
        tf = _best(fast, a, args.repeat)
        ts = _best(slow, a, args.repeat)
        print(f"{name:<22}{tf:>12.4f}{ts:>12.4f}{ts / tf:>10.1f}")


if __name__ == "__main__":
    main()
