"""Cross-ambiguity surfaces, cell-averaging thresholds and per-period features.

The CAF kernel correlates the surveillance signal against a Doppler-shifted
copy of the reference, ``y_r[n-k] exp(-j 2 pi f n T_s)``, which is the form
the echo takes in the synthesized signal; an echo at ``+f`` Hz therefore
peaks at ``+f``. The per-delay sums over the frequency grid are evaluated
with a chirp-z transform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.signal

from .clutter import ClutterConfig, cancel_clutter
from .scenario import BeamSet
from .waveform import DwellPair, delayed


@dataclass(frozen=True)
class DopplerGrid:
    min_hz: float = -480.0
    max_hz: float = 480.0
    step_hz: float = 40.0

    def __post_init__(self) -> None:
        if self.step_hz <= 0:
            raise ValueError("step_hz must be > 0")
        if self.max_hz < self.min_hz:
            raise ValueError("empty Doppler grid")

    @classmethod
    def symmetric(cls, max_abs_hz: float = 500.0, step_hz: float = 40.0) -> "DopplerGrid":
        n = int(math.floor(max_abs_hz / step_hz + 1e-9))
        return cls(-n * step_hz, n * step_hz, step_hz)

    @property
    def size(self) -> int:
        return int(math.floor((self.max_hz - self.min_hz) / self.step_hz + 1e-9)) + 1

    @property
    def values(self) -> np.ndarray:
        return self.min_hz + self.step_hz * np.arange(self.size)


@dataclass(frozen=True)
class CafSurface:
    grid: DopplerGrid
    magnitudes: np.ndarray
    best_delay_bin: np.ndarray
    period_index: int = 0
    beam_index: int = 0


@dataclass(frozen=True)
class FeatureVector:
    period_index: int
    detected: bool = False
    doppler_hz: float = math.nan
    beam_index: int = 0
    caf_peak_magnitude: float = 0.0
    doppler_refined_hz: float = math.nan
    doppler_time_s: float = math.nan
    aoa_rad: float = math.nan
    aoa_time_s: float = math.nan
    # echo magnitude in every beam at its own refined peak, beam order
    beam_amplitudes: tuple[float, ...] = ()


@dataclass(frozen=True)
class FeatureMatrix:
    features: tuple[FeatureVector, ...]
    sweep_period_s: float
    boresights_deg: tuple[float, ...] = ()
    beamwidth_deg: float = 10.0
    sidelobe_floor_db: float = -15.0

    def beam_set(self) -> Optional[BeamSet]:
        if not self.boresights_deg or any(math.isnan(b) for b in self.boresights_deg):
            return None
        return BeamSet(tuple(self.boresights_deg), self.beamwidth_deg, self.sidelobe_floor_db)

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        idx = [f.period_index for f in self.features]
        if idx and idx != list(range(idx[0], idx[0] + len(idx))):
            raise ValueError("period indices must be strictly increasing and contiguous")

    def __len__(self) -> int:
        return len(self.features)

    def head(self, k: int) -> "FeatureMatrix":
        return replace(self, features=self.features[:k])


@dataclass(frozen=True)
class DetectorSettings:
    grid: DopplerGrid = field(default_factory=DopplerGrid.symmetric)
    max_delay_bins: int = 8
    cfar_half_window: int = 8
    # Multiplier on the training-cell mean. 1.0 is the bare cell average;
    # 2.5 holds the per-period false-alarm rate of noise-only data under 5 %.
    threshold_scale: float = 2.5
    exclude_cut: bool = False
    guard_cells: int = 1
    min_abs_doppler_hz: Optional[float] = None
    refine: bool = True
    refine_points: int = 65
    aoa_min_dynamic_range_db: float = 3.0

    @property
    def doppler_exclusion_hz(self) -> float:
        if self.min_abs_doppler_hz is None:
            return 2.0 * self.grid.step_hz
        return self.min_abs_doppler_hz


# --------------------------------------------------------------------------
# CAF

@lru_cache(maxsize=32)
def _czt(n: int, m: int, step_cycles: float, start_cycles: float) -> scipy.signal.CZT:
    w = np.exp(2j * np.pi * step_cycles)
    a = np.exp(-2j * np.pi * start_cycles)
    return scipy.signal.CZT(n, m, w, a)


def doppler_transform(z: np.ndarray, f0_hz: float, step_hz: float, m: int,
                      sample_period_s: float) -> np.ndarray:
    """``sum_n z[..., n] exp(+j 2 pi (f0 + j*step) n T_s)`` for ``j < m``."""
    t = _czt(z.shape[-1], m, step_hz * sample_period_s, f0_hz * sample_period_s)
    return t(z, axis=-1)


def lag_products(surveillance: np.ndarray, reference: np.ndarray,
                 max_delay_bins: int) -> np.ndarray:
    """Rows ``y_s[n] conj(y_r[n-k])`` for ``k < max_delay_bins``."""
    ref_c = np.conj(reference)
    return np.stack([surveillance * delayed(ref_c, k) for k in range(max_delay_bins)])


def compute_caf(surveillance_residual: np.ndarray, reference: np.ndarray,
                grid: DopplerGrid, max_delay_bins: int, sample_period_s: float,
                period_index: int = 0, beam_index: int = 0) -> CafSurface:
    y_s = np.asarray(surveillance_residual)
    y_r = np.asarray(reference)
    if y_s.shape != y_r.shape:
        raise ValueError("surveillance and reference lengths differ")
    if max_delay_bins < 1:
        raise ValueError("max_delay_bins must be >= 1")
    if grid.size < 1:
        raise ValueError("empty Doppler grid")
    z = lag_products(y_s, y_r, max_delay_bins)
    mags = np.abs(doppler_transform(z, grid.min_hz, grid.step_hz, grid.size, sample_period_s))
    best = np.argmax(mags, axis=0)
    return CafSurface(grid, mags[best, np.arange(grid.size)], best, period_index, beam_index)


# --------------------------------------------------------------------------
# CFAR

def cfar_threshold(surface: Union[CafSurface, np.ndarray], half_window: int,
                   exclude_cut: bool = False, guard_cells: int = 1,
                   scale: float = 1.0) -> np.ndarray:
    """Mean of the training cells ``f + p*df``, ``|p| <= W``, times ``scale``.

    Cells near the grid edge average only the cells that exist. With
    ``exclude_cut`` the cell under test and ``guard_cells`` on each side are
    left out.
    """
    r = surface.magnitudes if isinstance(surface, CafSurface) else np.asarray(surface, float)
    n = len(r)
    if half_window < 1:
        raise ValueError("half_window must be >= 1")
    if n < 2 * half_window + 1:
        raise ValueError("half_window too large for the Doppler grid")
    skip = guard_cells if exclude_cut else -1
    acc = np.zeros(n)
    count = np.zeros(n)
    for p in range(-half_window, half_window + 1):
        if abs(p) <= skip:
            continue
        lo, hi = max(0, -p), min(n, n - p)
        acc[lo:hi] += r[lo + p:hi + p]
        count[lo:hi] += 1
    return scale * acc / count


# --------------------------------------------------------------------------
# feature extraction

def extract_feature(surfaces: Sequence[CafSurface], half_window: int,
                    min_abs_doppler_hz: float, threshold_scale: float = 1.0,
                    exclude_cut: bool = False, guard_cells: int = 1) -> FeatureVector:
    """Strongest above-threshold cell over all beams of one period."""
    period = surfaces[0].period_index if surfaces else 0
    best_val, best = -1.0, None
    for m, s in enumerate(surfaces, start=1):
        beta = cfar_threshold(s, half_window, exclude_cut, guard_cells, threshold_scale)
        freqs = s.grid.values
        ok = (np.abs(freqs) >= min_abs_doppler_hz - 1e-9) & (s.magnitudes > beta)
        if not ok.any():
            continue
        j = int(np.argmax(np.where(ok, s.magnitudes, -1.0)))
        if s.magnitudes[j] > best_val:
            best_val = float(s.magnitudes[j])
            best = (m if s.beam_index == 0 else s.beam_index, float(freqs[j]))
    if best is None:
        return FeatureVector(period_index=period)
    return FeatureVector(period_index=period, detected=True, doppler_hz=best[1],
                         beam_index=best[0], caf_peak_magnitude=best_val)


def refine_peak(z: np.ndarray, center_hz: float, half_width_hz: float,
                sample_period_s: float, points: int = 65) -> tuple[float, float]:
    """Local peak of ``|DTFT(z)|`` within ``center +- half_width``.

    Fine-grid argmax followed by a three-point parabolic vertex; returns the
    frequency and the magnitude evaluated exactly there.
    """
    step = 2.0 * half_width_hz / (points - 1)
    mags = np.abs(doppler_transform(z, center_hz - half_width_hz, step, points, sample_period_s))
    j = int(np.argmax(mags))
    f = center_hz - half_width_hz + j * step
    if 0 < j < points - 1:
        a, b, c = mags[j - 1], mags[j], mags[j + 1]
        den = a - 2.0 * b + c
        if den < 0:
            f += 0.5 * step * (a - c) / den
    n = np.arange(z.shape[-1])
    mag = float(np.abs(np.dot(z, np.exp(2j * np.pi * f * sample_period_s * n))))
    return f, mag


def _aoa_scan(amps: np.ndarray, beams: BeamSet, min_dynamic_range_db: float,
              offsets_rad: Optional[Sequence[float]]):
    """Pattern-fit cost over a dense receiver-side angle scan, or ``None``."""
    if np.any(amps <= 0) or len(amps) != beams.num_beams:
        return None
    log_a = np.log(amps)
    if 20.0 / math.log(10.0) * (log_a.max() - log_a.min()) < min_dynamic_range_db:
        return None
    psi = np.deg2rad(np.arange(0.0, 180.0, 0.01))
    shift = np.zeros(len(amps)) if offsets_rad is None else np.asarray(offsets_rad, dtype=float)
    off = psi[:, None] + shift[None, :] - beams.boresights_rad[None, :]
    log_g = np.maximum(-4.0 * math.log(2.0) * (off / beams.beamwidth_rad) ** 2,
                       math.log(beams.sidelobe_floor_linear))
    resid = log_a[None, :] - 0.5 * log_g
    resid -= resid.mean(axis=1, keepdims=True)
    return psi, np.einsum("ij,ij->i", resid, resid), log_g


def _vertex(psi: np.ndarray, cost: np.ndarray, j: int, lo: int, hi: int) -> float:
    best = psi[j]
    if lo < j < hi:
        a, b, c = cost[j - 1], cost[j], cost[j + 1]
        den = a - 2.0 * b + c
        if den > 0:
            best += 0.5 * (psi[1] - psi[0]) * (a - c) / den
    return float(best)


def estimate_aoa(amplitudes: Sequence[float], beams: BeamSet,
                 min_dynamic_range_db: float = 3.0,
                 offsets_rad: Optional[Sequence[float]] = None) -> float:
    """AoA (motion-model frame) from the echo amplitude seen in each beam.

    Fits log-amplitudes to the beam pattern with a free common scale by a
    dense scan over boresight-relative angle. ``offsets_rad`` is how far the
    target's receiver-side angle has moved, per beam, away from the angle
    being estimated (beams are dwelt on at different times). Returns NaN when
    every beam sees roughly the same level (target outside all mainlobes) or
    when the best fit puts the target in only one mainlobe.
    """
    scan = _aoa_scan(np.asarray(amplitudes, dtype=float), beams, min_dynamic_range_db,
                     offsets_rad)
    if scan is None:
        return math.nan
    psi, cost, log_g = scan
    j = int(np.argmin(cost))
    # a single beam above its floor cannot tell which side of boresight
    # the target is on
    if np.count_nonzero(log_g[j] > math.log(beams.sidelobe_floor_linear)) < 2:
        return math.nan
    return math.pi - _vertex(psi, cost, j, 0, len(psi) - 1)


def aoa_side_candidates(amplitudes: Sequence[float], beams: BeamSet,
                        min_dynamic_range_db: float = 3.0) -> tuple[float, float]:
    """Best pattern fits restricted to each side of the strongest beam.

    Returns ``(inner, outer)`` AoAs in the motion-model frame, where inner is
    the side with the smaller receiver-side angle. With one beam in its
    mainlobe the two fit equally well and only the offset from boresight is
    known. Both are NaN when the dynamic range is too small.
    """
    amps = np.asarray(amplitudes, dtype=float)
    scan = _aoa_scan(amps, beams, min_dynamic_range_db, None)
    if scan is None:
        return math.nan, math.nan
    psi, cost, _ = scan
    split = int(np.searchsorted(psi, beams.boresights_rad[int(np.argmax(amps))]))
    out = []
    for lo, hi in ((0, split), (split, len(psi))):
        if hi <= lo:
            out.append(math.nan)
            continue
        j = lo + int(np.argmin(cost[lo:hi]))
        out.append(math.pi - _vertex(psi, cost, j, lo, hi - 1))
    return out[0], out[1]


def detect_period(residuals: Sequence[np.ndarray], references: Sequence[np.ndarray],
                  period_index: int, sample_period_s: float, beams: BeamSet,
                  settings: DetectorSettings = DetectorSettings(),
                  period_start_s: Optional[float] = None,
                  ) -> tuple[FeatureVector, list[CafSurface]]:
    """Feature vector of one sweeping period from its clutter-free dwells."""
    m_beams = len(residuals)
    surfaces = [compute_caf(residuals[m], references[m], settings.grid, settings.max_delay_bins,
                            sample_period_s, period_index, m + 1) for m in range(m_beams)]
    fv = extract_feature(surfaces, settings.cfar_half_window, settings.doppler_exclusion_hz,
                         settings.threshold_scale, settings.exclude_cut, settings.guard_cells)
    if not fv.detected:
        return fv, surfaces
    n = len(residuals[0])
    dwell = n * sample_period_s
    if period_start_s is None:
        period_start_s = (period_index - 1) * m_beams * dwell
    mids = period_start_s + (np.arange(m_beams) + 0.5) * dwell

    j = int(np.argmin(np.abs(settings.grid.values - fv.doppler_hz)))
    f_ref = fv.doppler_hz
    amps = np.array([s.magnitudes[j] for s in surfaces])
    if settings.refine:
        half = settings.grid.step_hz
        for m in range(m_beams):
            k = int(surfaces[m].best_delay_bin[j])
            z = residuals[m] * delayed(np.conj(references[m]), k)
            f_m, amps[m] = refine_peak(z, fv.doppler_hz, half, sample_period_s,
                                       settings.refine_points)
            if m + 1 == fv.beam_index:
                f_ref = f_m
    aoa = estimate_aoa(amps, beams, settings.aoa_min_dynamic_range_db)
    power = amps ** 2
    fv = replace(fv, doppler_refined_hz=float(f_ref),
                 doppler_time_s=float(mids[fv.beam_index - 1]),
                 aoa_rad=aoa, aoa_time_s=float(np.dot(power, mids) / power.sum()),
                 beam_amplitudes=tuple(float(a) for a in amps))
    return fv, surfaces


def detect_dwells(dwells: Iterable[DwellPair], beams: BeamSet,
                  clutter: ClutterConfig = ClutterConfig(),
                  settings: DetectorSettings = DetectorSettings(),
                  num_periods: Optional[int] = None,
                  ) -> tuple[FeatureMatrix, dict[int, np.ndarray]]:
    """Cancel clutter, compute CAFs and extract features for every period.

    Returns the feature matrix and per-beam time-Doppler spectrograms
    (rows = periods, columns = grid frequencies).
    """
    by_period: dict[int, dict[int, DwellPair]] = {}
    for dw in dwells:
        by_period.setdefault(dw.period_index, {})[dw.beam_index] = dw
    periods = sorted(by_period)
    if num_periods is not None:
        periods = periods[:num_periods]
    m_beams = beams.num_beams
    features = []
    spectro = {m: np.zeros((len(periods), settings.grid.size)) for m in range(1, m_beams + 1)}
    sweep = math.nan
    for row, i in enumerate(periods):
        group = by_period[i]
        if sorted(group) != list(range(1, m_beams + 1)):
            raise ValueError(f"period {i} does not carry all {m_beams} beams")
        ordered = [group[m] for m in range(1, m_beams + 1)]
        ts = ordered[0].sample_period_s
        sweep = m_beams * ordered[0].n_samples * ts
        residuals = [cancel_clutter(d.surveillance_samples, d.reference_samples, clutter)
                     for d in ordered]
        refs = [d.reference_samples for d in ordered]
        fv, surfaces = detect_period(residuals, refs, i, ts, beams, settings)
        features.append(fv)
        for m, s in enumerate(surfaces, start=1):
            spectro[m][row] = s.magnitudes
    fm = FeatureMatrix(tuple(features), sweep, tuple(beams.surveillance_boresights_deg),
                       beams.beamwidth_deg, beams.sidelobe_floor_db)
    return fm, spectro


# --------------------------------------------------------------------------
# CSV

FEATURE_COLUMNS = ("period", "detected", "doppler_hz", "beam_index", "beam_boresight_deg",
                   "peak", "doppler_refined_hz", "doppler_time_s", "aoa_deg", "aoa_time_s",
                   "sweep_period_s", "beamwidth_deg", "sidelobe_floor_db")


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_feature_csv(path: Union[str, Path], fm: FeatureMatrix) -> None:
    """One row per period; per-beam echo magnitudes follow the fixed columns
    as ``amp_beam1 .. amp_beamM``, then every beam's boresight as
    ``boresight_beam1 .. boresight_beamM`` (repeated on each row)."""
    n_beams = max([len(fm.boresights_deg)] + [len(f.beam_amplitudes) for f in fm.features])
    bores = [_fmt(b) for b in fm.boresights_deg]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_COLUMNS + tuple(f"amp_beam{m}" for m in range(1, n_beams + 1))
                   + tuple(f"boresight_beam{m}" for m in range(1, len(bores) + 1)))
        for f in fm.features:
            bore = (fm.boresights_deg[f.beam_index - 1]
                    if f.detected and fm.boresights_deg else math.nan)
            w.writerow([f.period_index, int(f.detected), _fmt(f.doppler_hz),
                        f.beam_index if f.detected else "", _fmt(bore),
                        _fmt(f.caf_peak_magnitude) if f.detected else "",
                        _fmt(f.doppler_refined_hz), _fmt(f.doppler_time_s),
                        _fmt(math.degrees(f.aoa_rad)), _fmt(f.aoa_time_s),
                        repr(float(fm.sweep_period_s)), repr(float(fm.beamwidth_deg)),
                        repr(float(fm.sidelobe_floor_db))]
                       + [_fmt(a) for a in f.beam_amplitudes]
                       + [""] * (n_beams - len(f.beam_amplitudes)) + bores)


def _num(row: dict, key: str) -> float:
    v = row.get(key, "")
    return float(v) if v not in ("", None) else math.nan


def read_feature_csv(path: Union[str, Path],
                     boresights_deg: Sequence[float] = ()) -> FeatureMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no feature rows")
    missing = {"period", "detected", "doppler_hz", "beam_index"} - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    feats = []
    bores: dict[int, float] = {}
    for r in rows:
        det = bool(int(r["detected"]))
        beam = int(r["beam_index"]) if det and r["beam_index"] else 0
        if det and r.get("beam_boresight_deg"):
            bores[beam] = float(r["beam_boresight_deg"])
        aoa = _num(r, "aoa_deg")
        amps = []
        m = 1
        while f"amp_beam{m}" in r:
            amps.append(_num(r, f"amp_beam{m}"))
            m += 1
        if any(math.isnan(a) for a in amps):
            amps = []
        feats.append(FeatureVector(
            period_index=int(r["period"]), detected=det,
            doppler_hz=_num(r, "doppler_hz") if det else math.nan, beam_index=beam,
            caf_peak_magnitude=_num(r, "peak") if det else 0.0,
            doppler_refined_hz=_num(r, "doppler_refined_hz"),
            doppler_time_s=_num(r, "doppler_time_s"),
            aoa_rad=math.radians(aoa) if not math.isnan(aoa) else math.nan,
            aoa_time_s=_num(r, "aoa_time_s"), beam_amplitudes=tuple(amps)))
    sweep = _num(rows[0], "sweep_period_s")
    listed = []
    while f"boresight_beam{len(listed) + 1}" in rows[0]:
        listed.append(_num(rows[0], f"boresight_beam{len(listed) + 1}"))
    if not boresights_deg and listed and not any(math.isnan(b) for b in listed):
        boresights_deg = tuple(listed)
    if not boresights_deg and bores:
        top = max(bores)
        boresights_deg = tuple(bores.get(m, math.nan) for m in range(1, top + 1))
    bw = _num(rows[0], "beamwidth_deg")
    floor = _num(rows[0], "sidelobe_floor_db")
    return FeatureMatrix(tuple(feats), sweep, tuple(boresights_deg),
                         10.0 if math.isnan(bw) else bw, -15.0 if math.isnan(floor) else floor)


def write_spectrogram_csv(path: Union[str, Path], spectrogram: np.ndarray,
                          grid: DopplerGrid, first_period: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["period"] + [repr(float(f)) for f in grid.values])
        for row, vals in enumerate(spectrogram):
            w.writerow([first_period + row] + [repr(float(v)) for v in vals])
