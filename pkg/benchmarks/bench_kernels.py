"""Compiled search core against its pure-Python twin.

Run with ``python3 benchmarks/bench_kernels.py``.  Both back ends walk the
same lazy trees, so the reported level minima must agree exactly.
"""

import argparse
import math
import time

from brwexplode import kernels
from brwexplode.distributions import COUNT_CAP, DoubleExpSmall, PowerTail, Uniform01
from brwexplode.gwsim import displacement_root

CASES = [
    ("search", PowerTail(0.5), Uniform01(), dict(depth=12, budget=20_000)),
    ("search", PowerTail(0.5), DoubleExpSmall(), dict(depth=6, budget=20_000)),
    ("beam", PowerTail(0.5), DoubleExpSmall(), dict(depth=10, width=512)),
]


def run(kind, Z, W, params, backend, reps):
    out = []
    t0 = time.perf_counter()
    for rep in range(reps):
        root = displacement_root(0, rep)
        if kind == "search":
            res = kernels.search(Z, W, root, params["depth"], params["budget"], COUNT_CAP, math.inf, backend)
            out.append(res[0])
        else:
            out.append(kernels.beam(Z, W, root, params["depth"], params["width"], COUNT_CAP, backend)[0])
    return time.perf_counter() - t0, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled kernel not built; only the Python back end is available")
    print(f"{'kernel':<8}{'Z':<22}{'W':<26}{'python s':>10}{'cython s':>10}{'speedup':>9}  match")
    for kind, Z, W, params in CASES:
        tp, rp = run(kind, Z, W, params, "python", args.reps)
        if kernels.BACKEND == "cython":
            tc, rc = run(kind, Z, W, params, "cython", args.reps)
            same = all(str(a) == str(b) for a, b in zip(rp, rc))
            print(f"{kind:<8}{Z!r:<22}{W!r:<26}{tp:>10.3f}{tc:>10.3f}{tp / tc:>9.1f}  {same}")
        else:
            print(f"{kind:<8}{Z!r:<22}{W!r:<26}{tp:>10.3f}{'-':>10}{'-':>9}  -")


if __name__ == "__main__":
    main()
