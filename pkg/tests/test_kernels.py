import os
import subprocess
import sys

import numpy as np
import pytest

from mmalert import kernels

D = 3.5
K_DOP = 60e9 / 299_792_458.0


def random_problem(seed, k=9):
    rng = np.random.default_rng(seed)
    axes = (np.linspace(0.2, 3.3, 7), np.linspace(0.2, 3.0, 6), np.linspace(0.2, 2.0, 5),
            np.linspace(0, 2 * np.pi, 12, endpoint=False))
    t = np.arange(k) * 0.1
    f = rng.normal(0, 150, k)
    a = rng.uniform(1.6, 3.0, k)
    fv = rng.random(k) > 0.2
    av = rng.random(k) > 0.2
    f[~fv] = np.nan
    return axes, t, f, a, fv, av


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("penalty", [0.0, 1.0])
def test_backends_match_unpruned(seed, penalty):
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    axes, t, f, a, fv, av = random_problem(seed)
    args = (*axes, t, f, a, fv, av, 1 / 400, 6 / np.pi, D, K_DOP)
    fast = kernels.grid_cost(*args, penalty=penalty, prune=False, use_numba=True)
    slow = kernels.grid_cost(*args, penalty=penalty, prune=False, use_numba=False)
    assert fast.shape == (7 * 6 * 5 * 12,)
    both = np.isfinite(fast)
    assert np.array_equal(both, np.isfinite(slow))
    assert np.allclose(fast[both], slow[both], rtol=1e-12, atol=0)


def test_pruning_keeps_near_optimal_set():
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    axes, t, f, a, fv, av = random_problem(7)
    args = (*axes, t, f, a, fv, av, 1 / 400, 6 / np.pi, D, K_DOP)
    full = kernels.grid_cost(*args, prune=False)
    pruned = kernels.grid_cost(*args, prune=True, tol=0.05, floor=1e-9)
    bound = full.min() * 1.05 + 1e-9
    assert np.array_equal(np.flatnonzero(full <= bound), np.flatnonzero(pruned <= bound))


def test_env_flag_selects_numpy():
    env = dict(os.environ, MMALERT_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c",
                          "from mmalert import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
