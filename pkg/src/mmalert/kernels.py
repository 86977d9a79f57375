"""Hot loop of the exhaustive trajectory search.

Two interchangeable backends evaluate the matching cost of every grid
hypothesis: a numba-compiled loop (default) and a chunked pure-numpy path.
Set ``MMALERT_DISABLE_NUMBA=1`` to force the numpy path.

The Doppler here uses the product-to-sum form
``-(f_c/c) v [cos(theta - phi_T) + cos(theta - phi_R)]`` written with unit
line-of-sight vectors, which avoids one ``atan2`` per evaluation.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("MMALERT_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag
    HAVE_NUMBA = False


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def _grid_cost_loop(xs, ys, vs, thetas, times, f_meas, a_meas, f_valid, a_valid,
                    w1, w2, d, k_dop, penalty, prune, tol, floor):
    nx, ny, nv, nt = len(xs), len(ys), len(vs), len(thetas)
    n_k = len(times)
    out = np.empty(nx * ny * nv * nt)
    used = 0
    for k in range(n_k):
        if f_valid[k] or a_valid[k]:
            used += 1
    # periods from k onward that carry a measurement
    tail = np.zeros(n_k + 1, dtype=np.int64)
    for k in range(n_k - 1, -1, -1):
        tail[k] = tail[k + 1] + (1 if (f_valid[k] or a_valid[k]) else 0)
    cth = np.cos(thetas)
    sth = np.sin(thetas)
    bound = np.inf
    best = np.inf
    idx = 0
    for ix in range(nx):
        x1 = xs[ix]
        for iy in range(ny):
            y1 = ys[iy]
            for iv in range(nv):
                v = vs[iv]
                for it in range(nt):
                    c = cth[it]
                    s = sth[it]
                    acc = 0.0
                    n = 0
                    dead = False
                    for k in range(n_k):
                        fv = f_valid[k]
                        av = a_valid[k]
                        if not (fv or av):
                            continue
                        step = v * times[k]
                        x = x1 + step * c
                        y = y1 + step * s
                        if y <= 0.0:
                            if penalty > 0.0:
                                acc += penalty * tail[k]
                                n += tail[k]
                            break
                        n += 1
                        if fv:
                            rt = np.sqrt(x * x + y * y)
                            xr = x - d
                            rr = np.sqrt(xr * xr + y * y)
                            f = -k_dop * v * ((c * x + s * y) / rt + (c * xr + s * y) / rr)
                            e = w1 * (f - f_meas[k])
                            acc += e * e
                        if av:
                            e = w2 * (np.arctan2(y, x - d) - a_meas[k])
                            acc += e * e
                        if prune and acc > bound * used:
                            dead = True
                            break
                    if dead or n == 0:
                        out[idx] = np.inf
                    else:
                        cost = acc / n
                        out[idx] = cost
                        if cost < best:
                            best = cost
                            bound = best * (1.0 + tol) + floor
                    idx += 1
    return out


if HAVE_NUMBA:
    _grid_cost_jit = njit(cache=True, nogil=True)(_grid_cost_loop)


def _grid_cost_numpy(xs, ys, vs, thetas, times, f_meas, a_meas, f_valid, a_valid,
                     w1, w2, d, k_dop, penalty, chunk=1 << 15):
    X, Y, V, T = np.meshgrid(xs, ys, vs, thetas, indexing="ij")
    X, Y, V, T = (a.ravel() for a in (X, Y, V, T))
    use = f_valid | a_valid
    times_u = times[use]
    fm, am = f_meas[use], a_meas[use]
    fv, av = f_valid[use], a_valid[use]
    out = np.empty(len(X))
    if not use.any():
        out[:] = np.inf
        return out
    for lo in range(0, len(X), chunk):
        sl = slice(lo, lo + chunk)
        v = V[sl, None]
        c, s = np.cos(T[sl, None]), np.sin(T[sl, None])
        step = v * times_u[None, :]
        x = X[sl, None] + step * c
        y = Y[sl, None] + step * s
        alive = np.cumprod(y > 0.0, axis=1).astype(bool)
        xr = x - d
        with np.errstate(invalid="ignore", divide="ignore"):
            f = -k_dop * v * ((c * x + s * y) / np.sqrt(x * x + y * y)
                              + (c * xr + s * y) / np.sqrt(xr * xr + y * y))
        ef = np.where(fv & alive, (w1 * (f - fm)) ** 2, 0.0)
        ea = np.where(av & alive, (w2 * (np.arctan2(y, xr) - am)) ** 2, 0.0)
        acc = ef.sum(axis=1) + ea.sum(axis=1)
        n = alive.sum(axis=1)
        if penalty > 0.0:
            dead = (~alive).sum(axis=1)
            acc = acc + penalty * dead
            n = n + dead
        with np.errstate(invalid="ignore", divide="ignore"):
            out[sl] = np.where(n > 0, acc / np.maximum(n, 1), np.inf)
    return out


def grid_cost(xs, ys, vs, thetas, times, f_meas, a_meas, f_valid, a_valid,
              w1, w2, d, k_dop, penalty=0.0, prune=True, tol=0.05, floor=1e-9,
              use_numba=None) -> np.ndarray:
    """Matching cost of every ``(x1, y1, v, theta)`` grid point, C-ordered.

    With ``prune`` (numba backend only) a hypothesis is abandoned as soon as
    its partial cost proves it cannot enter the near-optimal set defined by
    ``tol`` and ``floor``; abandoned entries are ``inf``. The near-optimal set
    is unaffected by pruning.
    """
    args = [np.ascontiguousarray(a, dtype=np.float64)
            for a in (xs, ys, vs, thetas, times, f_meas, a_meas)]
    fv = np.ascontiguousarray(f_valid, dtype=np.bool_)
    av = np.ascontiguousarray(a_valid, dtype=np.bool_)
    # NaN in an unused slot must not leak into the sums
    args[5] = np.where(fv, args[5], 0.0)
    args[6] = np.where(av, args[6], 0.0)
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba and HAVE_NUMBA:
        return _grid_cost_jit(*args, fv, av, float(w1), float(w2), float(d), float(k_dop),
                              float(penalty), bool(prune), float(tol), float(floor))
    return _grid_cost_numpy(*args, fv, av, float(w1), float(w2), float(d), float(k_dop),
                            float(penalty))
