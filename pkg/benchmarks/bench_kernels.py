"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from irsnoma import _kernels_py

try:
    from irsnoma import _kernels
except ImportError:
    _kernels = None


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    strengths = np.sort(10.0 ** rng.uniform(-3, 3, (100_000, 4)), axis=1)
    J = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    cases = [
        ("balanced_sinr_batch 100k x K=4", lambda m: m.balanced_sinr_batch(strengths, 100.0)),
        ("siso_grid_search 64^3, K=2", lambda m: m.siso_grid_search(J, v, 10.0, 64, False)),
    ]
    print(f"{'kernel':34s} {'numpy [s]':>10s} {'compiled [s]':>13s} {'speedup':>8s}")
    for name, call in cases:
        t_py, out_py = _best_of(lambda: call(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:34s} {t_py:10.4f} {'n/a':>13s} {'n/a':>8s}")
            continue
        t_c, out_c = _best_of(lambda: call(_kernels), args.repeat)
        if isinstance(out_py, tuple) and np.ndim(out_py[0]) == 0:
            assert out_py[1] == out_c[1], "kernels disagree"
        else:
            assert np.allclose(out_py[0], out_c[0], rtol=1e-12), "kernels disagree"
        print(f"{name:34s} {t_py:10.4f} {t_c:13.4f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
