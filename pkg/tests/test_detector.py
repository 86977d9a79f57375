import math

import numpy as np
import pytest

from mmalert.detector import (CafSurface, DetectorSettings, DopplerGrid, FeatureMatrix,
                              FeatureVector, aoa_side_candidates, cfar_threshold, compute_caf, detect_dwells,
                              estimate_aoa, extract_feature, read_feature_csv, refine_peak,
                              write_feature_csv)
from mmalert.scenario import BeamSet, ScenarioConfig
from mmalert.waveform import delayed, gen_tx_baseband, iter_dwells

TS = 1e-6
GRID = DopplerGrid.symmetric()


def tone(f, n):
    return np.exp(-2j * math.pi * f * TS * np.arange(n))


def noise(rng, n, sigma=1.0):
    return sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)


def test_grid_defaults():
    assert GRID.size == 25
    assert GRID.values[0] == -480 and GRID.values[-1] == 480 and GRID.values[12] == 0


def test_matched_tone():
    n = 25_000
    y_r = gen_tx_baseband(3, n)
    s = compute_caf(y_r * tone(200, n), y_r, GRID, 8, TS)
    j = int(np.argmax(s.magnitudes))
    assert GRID.values[j] == 200
    assert s.magnitudes[j] == pytest.approx(n, rel=1e-3)
    assert s.best_delay_bin[j] == 0
    assert s.magnitudes.shape == (GRID.size,) and (s.magnitudes >= 0).all()


def brute_caf(y_s, y_r, freqs, kmax):
    n = np.arange(len(y_s))
    out = np.zeros((kmax, len(freqs)))
    for k in range(kmax):
        z = y_s * np.conj(delayed(y_r, k))
        for j, f in enumerate(freqs):
            out[k, j] = abs(np.sum(z * np.exp(2j * math.pi * f * n * TS)))
    return out


def test_delayed_tone_against_brute_force():
    n = 3000
    y_r = gen_tx_baseband(4, n)
    y_s = delayed(y_r, 3) * tone(-120, n)
    s = compute_caf(y_s, y_r, GRID, 6, TS)
    oracle = brute_caf(y_s, y_r, GRID.values, 6)
    assert np.allclose(s.magnitudes, oracle.max(axis=0), rtol=1e-9, atol=1e-9)
    j = int(np.argmax(s.magnitudes))
    assert GRID.values[j] == -120
    assert s.best_delay_bin[j] == 3


def test_noise_bound():
    n = 4096
    hits = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        s = compute_caf(noise(rng, n), noise(rng, n), GRID, 8, TS)
        hits += s.magnitudes.max() <= 5 * math.sqrt(n)
    assert hits >= 198


def test_caf_rejects():
    x = np.ones(10, complex)
    with pytest.raises(ValueError):
        compute_caf(x, x[:-1], GRID, 2, TS)
    with pytest.raises(ValueError):
        compute_caf(x, x, GRID, 0, TS)


def test_phase_and_scale_invariance():
    n = 5000
    rng = np.random.default_rng(8)
    y_r = gen_tx_baseband(9, n)
    y_s = 0.3 * delayed(y_r, 2) * tone(160, n) + noise(rng, n, 0.2)
    base = compute_caf(y_s, y_r, GRID, 4, TS)
    rot = np.exp(1j * 1.234)
    turned = compute_caf(y_s * rot, y_r * rot, GRID, 4, TS)
    assert np.allclose(turned.magnitudes, base.magnitudes, rtol=1e-10)
    scaled = compute_caf(3.0 * y_s, y_r, GRID, 4, TS)
    assert np.allclose(scaled.magnitudes, 3.0 * base.magnitudes, rtol=1e-10)
    fa = extract_feature([base], 8, 80.0)
    fb = extract_feature([scaled], 8, 80.0)
    assert (fa.doppler_hz, fa.beam_index) == (fb.doppler_hz, fb.beam_index) == (160, 1)


# ---------------------------------------------------------------- CFAR

def test_cfar_constant():
    assert np.allclose(cfar_threshold(np.full(25, 3.0), 8), 3.0, rtol=0, atol=1e-15)


def test_cfar_spike():
    r = np.zeros(25)
    r[12] = 9.0
    assert cfar_threshold(r, 4)[12] == pytest.approx(1.0, rel=1e-15)


def moving_average(r, w):
    out = np.empty(len(r))
    for i in range(len(r)):
        cells = [r[i + p] for p in range(-w, w + 1) if 0 <= i + p < len(r)]
        out[i] = sum(cells) / len(cells)
    return out


@pytest.mark.parametrize("seed", range(10))
def test_cfar_moving_average(seed):
    rng = np.random.default_rng(seed)
    r = rng.exponential(size=25)
    w = int(rng.integers(1, 13))
    assert np.allclose(cfar_threshold(r, w), moving_average(r, w), rtol=1e-12, atol=0)


def test_cfar_exclude_cut():
    r = np.arange(25, dtype=float)
    th = cfar_threshold(r, 3, exclude_cut=True, guard_cells=1)
    assert th[10] == pytest.approx(np.mean([7, 8, 12, 13]))
    assert cfar_threshold(r, 3, scale=2.0)[10] == pytest.approx(20.0)


def test_cfar_rejects():
    with pytest.raises(ValueError):
        cfar_threshold(np.ones(25), 0)
    with pytest.raises(ValueError):
        cfar_threshold(np.ones(25), 13)


# ---------------------------------------------------------------- features

def surface(mags, beam=0):
    mags = np.asarray(mags, float)
    return CafSurface(GRID, mags, np.zeros(len(mags), int), 5, beam)


def test_nothing_above_threshold():
    fv = extract_feature([surface(np.ones(25)), surface(np.full(25, 2.0))], 8, 80.0)
    assert not fv.detected and fv.period_index == 5 and math.isnan(fv.doppler_hz)


def test_tone_in_one_beam():
    rng = np.random.default_rng(1)
    mags = [rng.rayleigh(size=25) for _ in range(4)]
    j = int(np.flatnonzero(GRID.values == 160)[0])
    mags[2][j] = 50.0
    fv = extract_feature([surface(m) for m in mags], 8, 80.0)
    # exhaustive scan oracle
    cells = [(m[k], b + 1, GRID.values[k]) for b, m in enumerate(mags) for k in range(25)
             if abs(GRID.values[k]) >= 80 and m[k] > moving_average(m, 8)[k]]
    best = max(cells)
    assert fv.detected and (fv.doppler_hz, fv.beam_index) == (best[2], best[1]) == (160, 3)


def test_stronger_beam_wins():
    n = 5000
    y_r = gen_tx_baseband(2, n)
    echo = delayed(y_r, 1) * tone(-200, n)
    s1 = compute_caf(echo, y_r, GRID, 4, TS, beam_index=1)
    s2 = compute_caf(2 * echo, y_r, GRID, 4, TS, beam_index=2)
    fv = extract_feature([s1, s2], 8, 80.0)
    assert (fv.beam_index, fv.doppler_hz) == (2, -200)


def test_exclusion_band():
    mags = np.ones(25)
    mags[12] = 100.0   # 0 Hz
    mags[13] = 50.0    # 40 Hz
    assert not extract_feature([surface(mags)], 8, 80.0).detected
    assert extract_feature([surface(mags)], 8, 40.0).doppler_hz == 40


def test_strict_inequality():
    # a flat surface sits exactly at its own cell average and is not detected
    assert not extract_feature([surface(np.full(25, 7.0))], 8, 0.0).detected


def test_false_alarm_rate():
    n = 25_000
    settings = DetectorSettings()
    alarms = 0
    for seed in range(40):
        rng = np.random.default_rng(1000 + seed)
        surfaces = []
        for m in range(4):
            y_r = 31.6 * gen_tx_baseband(int(rng.integers(1 << 30)), n) + noise(rng, n)
            surfaces.append(compute_caf(noise(rng, n), y_r, settings.grid, 8, TS, 1, m + 1))
        alarms += extract_feature(surfaces, 8, settings.doppler_exclusion_hz,
                                  settings.threshold_scale).detected
    assert alarms <= 2


# ---------------------------------------------------------------- refinement / AoA

def test_refine_off_grid():
    n = 25_000
    y_r = gen_tx_baseband(5, n)
    z = (y_r * tone(173.0, n)) * np.conj(y_r)
    f, mag = refine_peak(z, 160.0, 40.0, TS)
    assert abs(f - 173.0) < 0.5
    assert mag == pytest.approx(n, rel=1e-3)


BEAMS = BeamSet()


@pytest.mark.parametrize("psi_deg", [12.0, 22.5, 33.0])
def test_aoa_from_amplitudes(psi_deg):
    off = math.radians(psi_deg) - BEAMS.boresights_rad
    g = np.maximum(np.exp(-4 * math.log(2) * (off / BEAMS.beamwidth_rad) ** 2),
                   BEAMS.sidelobe_floor_linear)
    aoa = estimate_aoa(7.0 * np.sqrt(g), BEAMS)
    assert math.degrees(math.pi - aoa) == pytest.approx(psi_deg, abs=0.02)


def test_aoa_undetermined():
    assert math.isnan(estimate_aoa([1.0, 1.0, 1.0, 1.0], BEAMS))
    assert math.isnan(estimate_aoa([1.0, 0.0, 1.0, 1.0], BEAMS))
    assert math.isnan(estimate_aoa([1.0, 1.0], BEAMS))
    # only one beam in its mainlobe: either side of boresight fits
    off = math.radians(50.0) - BEAMS.boresights_rad
    g = np.maximum(np.exp(-4 * math.log(2) * (off / BEAMS.beamwidth_rad) ** 2),
                   BEAMS.sidelobe_floor_linear)
    assert math.isnan(estimate_aoa(np.sqrt(g), BEAMS))


def pattern_amplitudes(psi_deg):
    off = math.radians(psi_deg) - BEAMS.boresights_rad
    return np.sqrt(np.maximum(np.exp(-4 * math.log(2) * (off / BEAMS.beamwidth_rad) ** 2),
                              BEAMS.sidelobe_floor_linear))


def test_side_candidates_single_mainlobe():
    # beam 1 (40 deg) alone is above its floor at 42.1 and 37.9 alike
    inner, outer = aoa_side_candidates(pattern_amplitudes(42.1), BEAMS)
    assert math.degrees(math.pi - outer) == pytest.approx(42.1, abs=0.02)
    assert math.degrees(math.pi - inner) == pytest.approx(37.9, abs=0.3)
    assert math.isnan(estimate_aoa(pattern_amplitudes(42.1), BEAMS))


def test_side_candidates_contain_resolved_aoa():
    amps = pattern_amplitudes(22.5)
    aoa = estimate_aoa(amps, BEAMS)
    assert min(abs(a - aoa) for a in aoa_side_candidates(amps, BEAMS)) < 1e-9


def test_side_candidates_flat():
    assert all(math.isnan(a) for a in aoa_side_candidates(np.ones(4), BEAMS))


# ---------------------------------------------------------------- pipeline and CSV

@pytest.fixture(scope="module")
def quiet_features():
    cfg = ScenarioConfig(noise_power_db=None, num_sweep_periods=6)
    fm, spec = detect_dwells(iter_dwells(cfg), cfg.beams)
    return cfg, fm, spec


def test_pipeline_tracks_truth(quiet_features):
    from mmalert.motion_model import doppler_at
    from mmalert.scenario import blocker_position_at

    cfg, fm, spec = quiet_features
    assert len(fm) == 6 and all(f.detected for f in fm.features)
    assert set(spec) == {1, 2, 3, 4} and spec[1].shape == (6, 25)
    for f in fm.features:
        p = blocker_position_at(cfg.blocker, f.doppler_time_s)
        truth = doppler_at(p, 1.0, cfg.blocker.heading_rad, 3.5, 60e9)
        assert abs(f.doppler_hz - truth) <= 40.0
        assert abs(f.doppler_refined_hz - truth) <= 2.0


def test_feature_csv_round_trip(tmp_path, quiet_features):
    _, fm, _ = quiet_features
    path = tmp_path / "features.csv"
    write_feature_csv(path, fm)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:6] == ["period", "detected", "doppler_hz", "beam_index",
                          "beam_boresight_deg", "peak"]
    back = read_feature_csv(path)
    assert back.boresights_deg == fm.boresights_deg
    assert back.sweep_period_s == fm.sweep_period_s
    for a, b in zip(fm.features, back.features):
        assert a.period_index == b.period_index and a.detected == b.detected
        assert a.doppler_hz == b.doppler_hz and a.beam_index == b.beam_index
        assert a.doppler_refined_hz == b.doppler_refined_hz
        assert a.beam_amplitudes == b.beam_amplitudes
        assert a.aoa_rad == pytest.approx(b.aoa_rad, rel=1e-12, nan_ok=True)


def test_feature_matrix_contiguous():
    with pytest.raises(ValueError):
        FeatureMatrix((FeatureVector(1), FeatureVector(3)), 0.1)
