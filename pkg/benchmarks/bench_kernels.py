"""Time the numba and numpy paths of the hot kernels against each other.

    python benchmarks/bench_kernels.py [--repeats 5]
"""
import argparse
import json
import time

import numpy as np

from tdsce import _kernels


def _best(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed")

    rng = np.random.default_rng(0)
    frames, frame_len = 82, 2304
    s = rng.standard_normal(frames * frame_len) + 1j * rng.standard_normal(frames * frame_len)
    delays = np.array([0, 2, 67, 98, 129, 151])
    gains = rng.standard_normal((frames, 6)) + 1j * rng.standard_normal((frames, 6))
    t = np.arange(frames) * frame_len / 7.56e6
    alpha = rng.uniform(-np.pi, np.pi, (6, 16))
    pc, ps = rng.uniform(-np.pi, np.pi, (2, 6, 16))

    cases = {
        "sparse_channel": (lambda: _kernels.sparse_channel_numpy(s, delays, gains, frame_len),
                           lambda: _kernels.sparse_channel_jit(s, delays, gains, frame_len)),
        "sos_fading": (lambda: _kernels.sos_fading_numpy(t, 71.5, alpha, pc, ps),
                       lambda: _kernels.sos_fading_jit(t, 71.5, alpha, pc, ps)),
    }
    report = {}
    for name, (np_fn, jit_fn) in cases.items():
        jit_fn()  # compile outside the timed region
        err = float(np.max(np.abs(np_fn() - jit_fn())))
        t_np, t_jit = _best(np_fn, args.repeats), _best(jit_fn, args.repeats)
        report[name] = {"numpy_s": t_np, "numba_s": t_jit, "speedup": t_np / t_jit,
                        "max_abs_diff": err}
        print(f"{name:15s} numpy {t_np * 1e3:8.2f} ms  numba {t_jit * 1e3:8.2f} ms  "
              f"speedup {t_np / t_jit:5.1f}x  max|diff| {err:.1e}")
    return report


if __name__ == "__main__":
    print(json.dumps(main(), indent=2))
