"""Time the trajectory grid search on the numba and pure-numpy backends.

    python3 benchmarks/bench_grid_search.py [--periods 14] [--repeats 3] [--coarse]

Both backends score the same noiseless traces; the script checks that they
agree on the argmin and the near-optimal set before reporting timings.
Run with ``MMALERT_DISABLE_NUMBA=1`` to confirm the fallback is selected by
the environment flag (the numba rows are then skipped).
"""

import argparse
import math
import time

import numpy as np

from mmalert import kernels
from mmalert.estimator import MatchWeights, SearchGrid, SmoothedTraces, estimate_trajectory
from mmalert.motion_model import MotionHypothesis, predict_features

D = 3.5
F_C = 60e9
T_D = 0.1


def traces_for(h: MotionHypothesis, k: int) -> SmoothedTraces:
    pf = predict_features(h, k, T_D, D, F_C)
    ok = np.ones(k, dtype=bool)
    return SmoothedTraces(np.arange(k) * T_D, pf.doppler_hz, pf.aoa_rad, ok, ok)


def timed(fn, repeats):
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--periods", type=int, default=14)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--coarse", action="store_true",
                    help="10-degree heading grid (faster numpy run)")
    args = ap.parse_args()

    grid = SearchGrid.default_for(D)
    if args.coarse:
        grid = SearchGrid(x1=grid.x1, theta=(0.0, math.radians(350.0), math.radians(10.0)))
    h = MotionHypothesis(1.7, 1.8, 1.0, math.radians(270.0))
    tr = traces_for(h, args.periods)
    w = MatchWeights()
    print(f"grid: {grid.size} hypotheses x {args.periods} periods, backend flag -> "
          f"{kernels.backend()}")

    runs = {}
    if kernels.HAVE_NUMBA:
        t0 = time.perf_counter()
        estimate_trajectory(traces_for(h, 2), SearchGrid(x1=(1.0, 1.2, 0.1), y1=(1.0, 1.2, 0.1),
                                                         v=(1.0, 1.2, 0.1)),
                            w, T_D, D, F_C, 1.0, use_numba=True)
        print(f"numba compile/load: {time.perf_counter() - t0:.2f} s")
        runs["numba"] = timed(lambda: estimate_trajectory(tr, grid, w, T_D, D, F_C, 1.0,
                                                          use_numba=True), args.repeats)
    runs["numpy"] = timed(lambda: estimate_trajectory(tr, grid, w, T_D, D, F_C, 1.0,
                                                      use_numba=False), args.repeats)

    for name, (sec, est) in runs.items():
        rate = grid.size * args.periods / sec / 1e6
        print(f"{name:>6}: {sec:8.3f} s  ({rate:7.1f} M hypothesis-periods/s)  "
              f"|G| = {len(est.near_optimal)}  best = {est.best.as_tuple()}")
    if "numba" in runs:
        a, b = runs["numba"][1], runs["numpy"][1]
        same = (a.best == b.best and np.array_equal(a.near_optimal, b.near_optimal)
                and math.isclose(a.min_cost, b.min_cost, rel_tol=1e-9, abs_tol=1e-15))
        print(f"backends agree: {same}; speedup x{runs['numpy'][0] / runs['numba'][0]:.1f}")
        if not same:
            raise SystemExit(1)


if __name__ == "__main__":
    main()
