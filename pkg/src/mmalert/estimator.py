"""Trajectory estimation from feature traces and blockage prediction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .detector import FeatureMatrix, aoa_side_candidates, estimate_aoa
from .motion_model import MotionHypothesis
from .scenario import LIGHT_SPEED_M_S, TWO_PI


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


@dataclass(frozen=True)
class SearchGrid:
    """Inclusive ranges ``(lo, hi, step)``; theta is in radians."""

    x1: tuple[float, float, float] = (0.2, 3.3, 0.1)
    y1: tuple[float, float, float] = (0.2, 3.0, 0.1)
    v: tuple[float, float, float] = (0.2, 2.0, 0.1)
    theta: tuple[float, float, float] = (0.0, math.radians(355.0), math.radians(5.0))
    tie_tolerance: float = 0.05
    absolute_floor: float = 1e-9

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "v", "theta"):
            lo, hi, step = getattr(self, name)
            if step <= 0 or hi < lo:
                raise ValueError(f"invalid search range for {name}: {(lo, hi, step)}")
        if self.tie_tolerance < 0:
            raise ValueError("tie_tolerance must be >= 0")

    @classmethod
    def default_for(cls, d: float, **kw) -> "SearchGrid":
        return cls(x1=(0.2, round(d - 0.2, 12), 0.1), **kw)

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        th = _axis(*self.theta)
        return (_axis(*self.x1), _axis(*self.y1), _axis(*self.v), th)

    @property
    def steps(self) -> np.ndarray:
        return np.array([self.x1[2], self.y1[2], self.v[2], self.theta[2]])

    @property
    def size(self) -> int:
        return int(np.prod([len(a) for a in self.axes]))


@dataclass(frozen=True)
class MatchWeights:
    w_doppler: float = 1.0 / 400.0
    w_aoa: float = 1.0 / (math.pi / 6.0)

    def __post_init__(self) -> None:
        if self.w_doppler < 0 or self.w_aoa < 0 or (self.w_doppler == 0 and self.w_aoa == 0):
            raise ValueError("weights must be >= 0 and not both zero")


@dataclass(frozen=True)
class SmoothedTraces:
    times_s: np.ndarray
    doppler_hz: np.ndarray
    aoa_rad: np.ndarray
    doppler_valid: np.ndarray
    aoa_valid: np.ndarray
    # second AoA trace when the side of boresight could not be resolved
    aoa_alt_rad: Optional[np.ndarray] = None
    aoa_alt_valid: Optional[np.ndarray] = None

    @property
    def num_periods(self) -> int:
        return len(self.times_s)

    def branches(self) -> list["SmoothedTraces"]:
        if self.aoa_alt_rad is None:
            return [self]
        main = replace(self, aoa_alt_rad=None, aoa_alt_valid=None)
        return [main, replace(main, aoa_rad=self.aoa_alt_rad, aoa_valid=self.aoa_alt_valid)]


@dataclass(frozen=True)
class TrajectoryEstimate:
    best: MotionHypothesis
    near_optimal: np.ndarray  # (n, 4): x1, y1, v, theta
    min_cost: float
    time_origin_s: float = 0.0
    # grid-only result, kept when the continuous refinement replaced it
    grid_best: Optional[MotionHypothesis] = None
    grid_set_size: Optional[int] = None


@dataclass(frozen=True)
class PredictionResult:
    best_hypothesis: MotionHypothesis
    near_optimal_set: np.ndarray
    blockage_set_size: int
    blockage_probability: float
    blocks: bool
    predicted_crossing_time_s: Optional[float]
    warning_time_s: Optional[float]
    min_cost: float = math.nan
    grid_best_hypothesis: Optional[MotionHypothesis] = None

    @property
    def set_size(self) -> int:
        return len(self.near_optimal_set)

    def to_json(self) -> dict:
        h = self.best_hypothesis
        out = {
            "best_hypothesis": {"x1": h.x1_m, "y1": h.y1_m, "v": h.v_m_s,
                                "theta_deg": math.degrees(h.theta_rad)},
            "set_size": self.set_size,
            "blockage_set_size": self.blockage_set_size,
            "blockage_probability": self.blockage_probability,
            "blocks": self.blocks,
            "predicted_crossing_time_s": self.predicted_crossing_time_s,
            "warning_time_s": self.warning_time_s,
            "min_cost": self.min_cost,
        }
        if self.grid_best_hypothesis is not None:
            g = self.grid_best_hypothesis
            out["grid_best_hypothesis"] = {"x1": g.x1_m, "y1": g.y1_m, "v": g.v_m_s,
                                           "theta_deg": math.degrees(g.theta_rad)}
        return out


# --------------------------------------------------------------------------
# smoothing

def _robust_polyfit(t: np.ndarray, y: np.ndarray, degree: int, outlier_sigma: float,
                    scale_floor: float):
    poly = np.polynomial.Polynomial.fit(t, y, degree)
    resid = y - poly(t)
    mad = 1.4826 * np.median(np.abs(resid - np.median(resid)))
    keep = np.abs(resid) <= outlier_sigma * max(mad, scale_floor)
    if not keep.all() and keep.sum() >= degree + 1:
        poly = np.polynomial.Polynomial.fit(t[keep], y[keep], degree)
    else:
        keep = np.ones_like(keep)
    return poly, keep


def smooth_traces(fm: FeatureMatrix, poly_degree: int = 3, outlier_sigma: float = 3.0,
                  use_refined: bool = True, doppler_floor_hz: float = 2.0,
                  aoa_floor_rad: float = math.radians(1.0)) -> SmoothedTraces:
    """Fit Doppler and AoA traces with polynomials in time.

    Points farther than ``outlier_sigma`` robust scales from the first fit are
    dropped and the fit is repeated once. Outputs are evaluated at the start
    of every period in the matrix; a period is valid when it lies within one
    sweep of the span covered by the kept points.

    When per-beam echo amplitudes are available the AoA samples are
    re-estimated once using the angular rate of the first AoA fit, since
    each beam sees the target at a slightly different moment of the sweep.
    If no period has an unambiguous AoA, the amplitudes still give the
    offset from the detecting beam's boresight; one trace is fitted per side
    and returned as ``aoa_rad`` and ``aoa_alt_rad``.
    """
    td = fm.sweep_period_s
    periods = np.array([f.period_index for f in fm.features])
    times = (periods - 1) * td
    det = [f for f in fm.features if f.detected]
    if len(det) < poly_degree + 1:
        raise ValueError(f"{len(det)} detections cannot fit a degree-{poly_degree} polynomial")

    def stamp(f, t):
        return t if math.isfinite(t) else (f.period_index - 0.5) * td

    f_t = np.array([stamp(f, f.doppler_time_s) for f in det])
    f_y = np.array([f.doppler_refined_hz if use_refined and math.isfinite(f.doppler_refined_hz)
                    else f.doppler_hz for f in det])
    a_pts = []
    for f in det:
        if use_refined and math.isfinite(f.aoa_rad):
            a_pts.append((stamp(f, f.aoa_time_s), f.aoa_rad))
        elif not use_refined and fm.boresights_deg:
            a_pts.append((stamp(f, f.doppler_time_s),
                          math.pi - math.radians(fm.boresights_deg[f.beam_index - 1])))

    def fit(t, y, deg, floor):
        if len(t) == 0:
            return np.full(len(times), math.nan), np.zeros(len(times), bool), None
        deg = min(deg, len(t) - 1)
        if deg == 0:
            poly, keep = np.polynomial.Polynomial([float(np.median(y))]), np.ones(len(t), bool)
        else:
            poly, keep = _robust_polyfit(t, y, deg, outlier_sigma, floor)
        lo, hi = t[keep].min() - td, t[keep].max() + td
        return poly(times), (times >= lo - 1e-12) & (times <= hi + 1e-12), poly

    def unzip(pts):
        if not pts:
            return np.zeros(0), np.zeros(0)
        return (np.array(c) for c in zip(*pts))

    dop, dv, _ = fit(f_t, f_y, poly_degree, doppler_floor_hz)
    aoa, av, a_poly = fit(*unzip(a_pts), poly_degree, aoa_floor_rad)
    beams = fm.beam_set()
    if use_refined and a_poly is not None and beams is not None:
        rate = a_poly.deriv()
        m_beams = beams.num_beams
        dwell = td / m_beams
        deskewed = []
        for f in det:
            if not math.isfinite(f.aoa_rad):
                continue
            if len(f.beam_amplitudes) != m_beams:
                deskewed.append((stamp(f, f.aoa_time_s), f.aoa_rad))
                continue
            t_ref = (f.period_index - 0.5) * td
            t_m = (f.period_index - 1) * td + (np.arange(m_beams) + 0.5) * dwell
            # receiver-side angle runs opposite to the motion-model AoA
            a = estimate_aoa(f.beam_amplitudes, beams, 0.0, -float(rate(t_ref)) * (t_m - t_ref))
            deskewed.append((t_ref, a) if math.isfinite(a) else (stamp(f, f.aoa_time_s), f.aoa_rad))
        aoa, av, _ = fit(*unzip(deskewed), poly_degree, aoa_floor_rad)
    if use_refined and a_poly is None and beams is not None:
        sides = ([], [])
        for f in det:
            if len(f.beam_amplitudes) == beams.num_beams:
                for pts, a in zip(sides, aoa_side_candidates(f.beam_amplitudes, beams)):
                    if math.isfinite(a):
                        pts.append((stamp(f, f.aoa_time_s), a))
        if sides[0] and sides[1]:
            aoa, av, _ = fit(*unzip(sides[0]), poly_degree, aoa_floor_rad)
            alt, alt_v, _ = fit(*unzip(sides[1]), poly_degree, aoa_floor_rad)
            return SmoothedTraces(times, dop, aoa, dv, av, alt, alt_v)
    return SmoothedTraces(times, dop, aoa, dv, av)


# --------------------------------------------------------------------------
# search

def estimate_trajectory(traces: SmoothedTraces, grid: SearchGrid, weights: MatchWeights,
                        T_d: float, d: float, f_c: float, truncation_penalty: float = 0.0,
                        use_numba: Optional[bool] = None,
                        return_costs: bool = False, refine_seeds: int = 0,
                        seed_tolerance: float = 9.0):
    """Exhaustive search for the hypotheses that best explain the traces.

    With ``refine_seeds > 0`` the lowest-cost grid points (at most that many,
    all within ``seed_tolerance`` relative of the grid minimum) seed a local
    least-squares fit in continuous coordinates, and the near-optimal set is
    formed from the refined hypotheses with the grid's tie rule. Traces with
    two AoA branches are searched once per branch and the lower cost wins.

    ``T_d`` is implied by ``traces.times_s``; it is accepted for symmetry with
    the forward model and checked for consistency.
    """
    if traces.aoa_alt_rad is not None:
        # unresolved side of boresight: keep whichever AoA trace fits better
        runs = [estimate_trajectory(b, grid, weights, T_d, d, f_c, truncation_penalty,
                                    use_numba, return_costs, refine_seeds, seed_tolerance)
                for b in traces.branches()]
        key = (lambda r: r[0].min_cost) if return_costs else (lambda r: r.min_cost)
        return min(runs, key=key)
    if grid.size == 0:
        raise ValueError("empty search grid")
    if not (traces.doppler_valid.any() or traces.aoa_valid.any()):
        raise ValueError("no valid trace samples")
    t = traces.times_s - traces.times_s[0]
    if len(t) > 1 and not np.allclose(np.diff(t), T_d):
        raise ValueError("trace times are not spaced by T_d")
    xs, ys, vs, ths = grid.axes
    k_dop = f_c / LIGHT_SPEED_M_S
    tol = max(grid.tie_tolerance, seed_tolerance) if refine_seeds > 0 else grid.tie_tolerance
    costs = kernels.grid_cost(xs, ys, vs, ths, t, traces.doppler_hz, traces.aoa_rad,
                              traces.doppler_valid, traces.aoa_valid,
                              weights.w_doppler, weights.w_aoa, d, k_dop,
                              penalty=truncation_penalty, tol=tol,
                              floor=grid.absolute_floor, use_numba=use_numba)
    i_best = int(np.argmin(costs))
    c_min = float(costs[i_best])
    if not math.isfinite(c_min):
        raise ValueError("no hypothesis produced a finite cost")
    members = np.flatnonzero(costs <= c_min * (1.0 + grid.tie_tolerance) + grid.absolute_floor)
    shape = (len(xs), len(ys), len(vs), len(ths))
    ix, iy, iv, it = np.unravel_index(members, shape)
    near = np.column_stack((xs[ix], ys[iy], vs[iv], ths[it]))
    bx, by, bv, bt = np.unravel_index(i_best, shape)
    best = MotionHypothesis(float(xs[bx]), float(ys[by]), float(vs[bv]), float(ths[bt]))
    est = TrajectoryEstimate(best, near, c_min, float(traces.times_s[0]))
    if refine_seeds > 0:
        pool = np.flatnonzero(costs <= c_min * (1.0 + seed_tolerance) + grid.absolute_floor)
        pool = pool[np.argsort(costs[pool], kind="stable")[:refine_seeds]]
        sx, sy, sv, st = np.unravel_index(pool, shape)
        seeds = np.column_stack((xs[sx], ys[sy], vs[sv], ths[st]))
        est = _refine(est, seeds, traces, t, weights, d, k_dop, truncation_penalty, grid)
    return (est, costs.reshape(shape)) if return_costs else est


def _kinematics(p, t, d):
    x1, y1, v, th = p
    c, s = math.cos(th), math.sin(th)
    x = x1 + v * t * c
    y = y1 + v * t * s
    return c, s, x, y, x - d


def _residuals(p, t, f_meas, a_meas, fv, av, w1, w2, d, k_dop, penalty):
    c, s, x, y, xr = _kinematics(p, t, d)
    v = p[2]
    alive = np.cumprod(y > 0.0).astype(bool)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = -k_dop * v * ((c * x + s * y) / np.hypot(x, y) + (c * xr + s * y) / np.hypot(xr, y))
    rf = np.where(fv & alive, w1 * (f - f_meas), 0.0)
    ra = np.where(av & alive, w2 * (np.arctan2(y, xr) - a_meas), 0.0)
    rp = np.where(alive, 0.0, math.sqrt(penalty))
    return np.concatenate((rf, ra, rp))


def _jacobian(p, t, f_meas, a_meas, fv, av, w1, w2, d, k_dop, penalty):
    c, s, x, y, xr = _kinematics(p, t, d)
    v = p[2]
    alive = np.cumprod(y > 0.0).astype(bool)
    with np.errstate(invalid="ignore", divide="ignore"):
        rt, rr = np.hypot(x, y), np.hypot(xr, y)
        # partials of the Doppler in position, speed and heading
        f_x = -k_dop * v * (y * (c * y - s * x) / rt ** 3 + y * (c * y - s * xr) / rr ** 3)
        f_y = -k_dop * v * (x * (s * x - c * y) / rt ** 3 + xr * (s * xr - c * y) / rr ** 3)
        f_v = -k_dop * ((c * x + s * y) / rt + (c * xr + s * y) / rr)
        f_th = -k_dop * v * ((c * y - s * x) / rt + (c * y - s * xr) / rr)
        a_x, a_y = -y / rr ** 2, xr / rr ** 2
    dx = (np.ones_like(t), np.zeros_like(t), t * c, -v * t * s)
    dy = (np.zeros_like(t), np.ones_like(t), t * s, v * t * c)
    jf = np.column_stack([f_x * dx[k] + f_y * dy[k] for k in range(4)])
    jf[:, 2] += f_v
    jf[:, 3] += f_th
    ja = np.column_stack([a_x * dx[k] + a_y * dy[k] for k in range(4)])
    jf = np.where((fv & alive)[:, None], w1 * jf, 0.0)
    ja = np.where((av & alive)[:, None], w2 * ja, 0.0)
    return np.vstack((jf, ja, np.zeros((len(t), 4))))


def _refine(est: TrajectoryEstimate, seeds: np.ndarray, traces: SmoothedTraces, t: np.ndarray,
            weights: MatchWeights, d: float, k_dop: float, penalty: float,
            grid: SearchGrid) -> TrajectoryEstimate:
    use = traces.doppler_valid | traces.aoa_valid
    fv, av = traces.doppler_valid[use], traces.aoa_valid[use]
    fm = np.where(fv, traces.doppler_hz[use], 0.0)
    am = np.where(av, traces.aoa_rad[use], 0.0)
    tu = t[use]
    args = (tu, fm, am, fv, av, weights.w_doppler, weights.w_aoa, d, k_dop, penalty)
    refined = np.empty_like(seeds)
    costs = np.full(len(seeds), np.inf)
    for n, h in enumerate(seeds):
        sol = least_squares(_residuals, h, jac=_jacobian, args=args, method="lm",
                            x_scale=grid.steps, xtol=1e-10, ftol=1e-12, max_nfev=200)
        p = sol.x.copy()
        if p[2] < 0:
            p[2], p[3] = -p[2], p[3] + math.pi
        p[3] %= TWO_PI
        refined[n] = p
        if not p[1] > 0:
            continue
        # score with the search kernel so grid and refined costs are comparable
        costs[n] = kernels.grid_cost(p[:1], p[1:2], p[2:3], p[3:], t, traces.doppler_hz,
                                     traces.aoa_rad, traces.doppler_valid, traces.aoa_valid,
                                     weights.w_doppler, weights.w_aoa, d, k_dop,
                                     penalty=penalty, prune=False, use_numba=False)[0]
    if est.min_cost < costs.min():
        # the local fit never does worse than its seed unless it diverged
        return est
    c_min = float(costs.min())
    keep = costs <= c_min * (1.0 + grid.tie_tolerance) + grid.absolute_floor
    near = refined[keep]
    b = refined[int(np.argmin(costs))]
    return TrajectoryEstimate(MotionHypothesis(*map(float, b)), near, c_min, est.time_origin_s,
                              grid_best=est.best, grid_set_size=len(est.near_optimal))


# --------------------------------------------------------------------------
# blockage indicators

def _arctan_principal(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.arctan(num / den)
    return np.where(den == 0, np.sign(num) * math.pi / 2, out)


def blockage_indicator_angular(h, d: float, convention: str = "principal"):
    """Angle-window test ``phi_T1 <= 2 pi - theta <= pi - phi_R1``.

    ``convention="principal"`` uses single-argument arctangents (range
    ``(-pi/2, pi/2)``); ``"atan2"`` uses the motion model's angles. Accepts a
    :class:`MotionHypothesis` or an ``(n, 4)`` array.
    """
    arr = np.atleast_2d(np.asarray(h.as_tuple() if isinstance(h, MotionHypothesis) else h,
                                   dtype=float))
    x, y, th = arr[:, 0], arr[:, 1], arr[:, 3] % TWO_PI
    if convention == "principal":
        phi_t, phi_r = _arctan_principal(y, x), _arctan_principal(y, x - d)
    elif convention == "atan2":
        phi_t, phi_r = np.arctan2(y, x), np.arctan2(y, x - d)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    turn = TWO_PI - th
    out = ((phi_t <= turn) & (turn <= math.pi - phi_r)).astype(int)
    return int(out[0]) if isinstance(h, MotionHypothesis) else out


def line_crossing_times(hyps: np.ndarray) -> np.ndarray:
    """Time each hypothesis reaches ``y = 0`` (NaN if it never does)."""
    x, y, v, th = (hyps[:, i] for i in range(4))
    vy = v * np.sin(th)
    ok = (v > 0) & (vy < -1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, -y / vy, np.nan)


def geometric_blockage(hyps: np.ndarray, d: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ray/segment test; returns ``(blocks, crossing_time)``."""
    t = line_crossing_times(hyps)
    with np.errstate(invalid="ignore"):
        xc = hyps[:, 0] + hyps[:, 2] * np.cos(hyps[:, 3]) * t
        blocks = np.isfinite(t) & (xc > 0.0) & (xc < d)
    return blocks, np.where(blocks, t, np.nan)


def blockage_indicator_geometric(h: MotionHypothesis, d: float) -> tuple[int, Optional[float]]:
    from .scenario import ray_crosses_los

    hit, t = ray_crosses_los(h.x1_m, h.y1_m, h.v_m_s, h.theta_rad, d)
    return int(hit), t


# --------------------------------------------------------------------------
# prediction

def predict(estimate: TrajectoryEstimate, d: float, sensing_end_s: float,
            indicator: str = "geometric", decision_threshold: float = 0.9,
            angle_convention: str = "principal") -> PredictionResult:
    near = np.asarray(estimate.near_optimal, dtype=float)
    if len(near) == 0:
        raise ValueError("near-optimal set is empty")
    if indicator == "geometric":
        blocks_mask, t_cross = geometric_blockage(near, d)
    elif indicator == "angular":
        blocks_mask = blockage_indicator_angular(near, d, angle_convention).astype(bool)
        t_cross = np.where(blocks_mask, line_crossing_times(near), np.nan)
    else:
        raise ValueError(f"unknown indicator {indicator!r}")
    n_block = int(blocks_mask.sum())
    p_b = n_block / len(near)
    finite = t_cross[np.isfinite(t_cross)]
    crossing = float(np.median(finite)) + estimate.time_origin_s if len(finite) else None
    blocks = p_b >= decision_threshold
    return PredictionResult(
        best_hypothesis=estimate.best,
        near_optimal_set=near,
        blockage_set_size=n_block,
        blockage_probability=p_b,
        blocks=bool(blocks),
        predicted_crossing_time_s=crossing,
        warning_time_s=None if crossing is None else crossing - sensing_end_s,
        min_cost=estimate.min_cost,
        grid_best_hypothesis=estimate.grid_best,
    )


# --------------------------------------------------------------------------
# features -> prediction

@dataclass(frozen=True)
class EstimatorSettings:
    poly_degree: int = 3
    outlier_sigma: float = 3.0
    min_detections: int = 3
    use_refined_features: bool = True
    grid: Optional[SearchGrid] = None
    weights: MatchWeights = field(default_factory=MatchWeights)
    indicator: str = "geometric"
    angle_convention: str = "principal"
    decision_threshold: float = 0.9
    # cost charged per measured period after a hypothesis has crossed y = 0
    truncation_penalty: float = 1.0
    # continuous least-squares polish of the best grid points; 0 keeps the
    # decision on the grid alone
    refine_seeds: int = 20
    seed_tolerance: float = 9.0

    def grid_for(self, d: float) -> SearchGrid:
        return self.grid if self.grid is not None else SearchGrid.default_for(d)


def predict_from_features(fm: FeatureMatrix, d: float, f_c: float,
                          settings: EstimatorSettings = EstimatorSettings(),
                          use_numba: Optional[bool] = None) -> Optional[PredictionResult]:
    """Smooth, search and predict; ``None`` when there are too few detections."""
    n_det = sum(f.detected for f in fm.features)
    if n_det < max(settings.min_detections, 2):
        return None
    degree = min(settings.poly_degree, n_det - 1)
    traces = smooth_traces(fm, degree, settings.outlier_sigma, settings.use_refined_features)
    est = estimate_trajectory(traces, settings.grid_for(d), settings.weights,
                              fm.sweep_period_s, d, f_c, settings.truncation_penalty,
                              use_numba=use_numba, refine_seeds=settings.refine_seeds,
                              seed_tolerance=settings.seed_tolerance)
    end = (fm.features[-1].period_index) * fm.sweep_period_s
    return predict(est, d, end, settings.indicator, settings.decision_threshold,
                   settings.angle_convention)


def with_grid(settings: EstimatorSettings, grid: SearchGrid) -> EstimatorSettings:
    return replace(settings, grid=grid)
