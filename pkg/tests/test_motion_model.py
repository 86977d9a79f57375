import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmalert.motion_model import (MotionHypothesis, angles_at, doppler_at, doppler_gradient,
                                  predict_features)
from mmalert.scenario import LIGHT_SPEED_M_S

D = 3.5
FC = 60e9
TD = 0.1


def test_angles_midpoint_45():
    t, r = angles_at((1.75, 1.75), D)
    assert t == pytest.approx(math.pi / 4, abs=1e-15)
    assert r == pytest.approx(3 * math.pi / 4, abs=1e-15)


@pytest.mark.parametrize("y", [0.1, 1.0, 7.5])
def test_angle_above_receiver(y):
    assert angles_at((D, y), D)[1] == math.pi / 2


def test_angles_oracle():
    t, r = angles_at((1.75, 1.0), D)
    # four-decimal values; the exact ones are atan(1/1.75) and its supplement
    assert t == pytest.approx(0.5191, abs=1e-4)
    assert r == pytest.approx(2.6225, abs=1e-4)
    assert t + r == pytest.approx(math.pi, abs=1e-15)


@pytest.mark.parametrize("y", [0.0, -1.0])
def test_angles_reject_baseline(y):
    with pytest.raises(ValueError):
        angles_at((1.0, y), D)


def test_doppler_static():
    assert doppler_at((1.0, 2.0), 0.0, 1.0, D, FC) == 0.0


def test_doppler_perpendicular_to_bisector():
    pos = (0.8, 1.3)
    t, r = angles_at(pos, D)
    assert doppler_at(pos, 1.2, 0.5 * (t + r) + math.pi / 2, D, FC) == pytest.approx(0, abs=1e-9)


def test_doppler_descending_midpoint():
    # independent evaluation: rate of change of the bistatic path length
    x, y = 1.75, 1.0
    vx, vy = 0.0, -1.0
    rate = (x * vx + y * vy) / math.hypot(x, y) + ((x - D) * vx + y * vy) / math.hypot(x - D, y)
    oracle = -FC / LIGHT_SPEED_M_S * rate
    f = doppler_at((x, y), 1.0, 1.5 * math.pi, D, FC)
    assert f == pytest.approx(oracle, abs=1e-9)
    assert f == pytest.approx(198.59, abs=0.01)


def test_hypothesis_validation():
    with pytest.raises(ValueError):
        MotionHypothesis(1.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        MotionHypothesis(1.0, 1.0, -1.0, 0.0)
    assert MotionHypothesis(1.0, 1.0, 1.0, -math.pi / 2).theta_rad == pytest.approx(1.5 * math.pi)


def test_predict_single_period():
    h = MotionHypothesis(0.7, 1.9, 0.8, math.radians(250))
    pf = predict_features(h, 1, TD, D, FC)
    t, r = angles_at((0.7, 1.9), D)
    assert pf.num_periods == 1
    assert pf.aod_rad[0] == pytest.approx(t, rel=1e-15)
    assert pf.aoa_rad[0] == pytest.approx(r, rel=1e-15)
    assert pf.doppler_hz[0] == pytest.approx(doppler_at((0.7, 1.9), 0.8, h.theta_rad, D, FC),
                                             rel=1e-14, abs=1e-12)


def test_predict_static():
    pf = predict_features(MotionHypothesis(2.0, 1.0, 0.0, 3.0), 6, TD, D, FC)
    assert not pf.doppler_hz.any()
    assert np.all(pf.aoa_rad == pf.aoa_rad[0])


def test_predict_doppler_decreasing():
    pf = predict_features(MotionHypothesis(1.75, 1.8, 1.0, 1.5 * math.pi), 8, TD, D, FC)
    assert pf.num_periods == 8
    assert np.all(np.diff(np.abs(pf.doppler_hz)) < 0)


def test_predict_truncates():
    pf = predict_features(MotionHypothesis(1.75, 0.35, 1.0, 1.5 * math.pi), 8, TD, D, FC)
    assert pf.num_periods == 4
    assert len(pf.aoa_rad) == len(pf.aod_rad) == 4


def test_predict_rejects_k():
    with pytest.raises(ValueError):
        predict_features(MotionHypothesis(1, 1, 1, 0), 0, TD, D, FC)


hyps = st.builds(MotionHypothesis, st.floats(-1.0, 4.5), st.floats(0.3, 3.0),
                 st.floats(0.0, 2.0), st.floats(0.0, 2 * math.pi))


@settings(max_examples=200, deadline=None)
@given(hyps)
def test_mirror_symmetry(h):
    m = MotionHypothesis(D - h.x1_m, h.y1_m, h.v_m_s, math.pi - h.theta_rad)
    a = predict_features(h, 10, TD, D, FC)
    b = predict_features(m, 10, TD, D, FC)
    assert a.num_periods == b.num_periods
    assert np.allclose(np.abs(a.doppler_hz), np.abs(b.doppler_hz), rtol=0, atol=1e-9)
    assert np.allclose(a.aod_rad, math.pi - b.aoa_rad, atol=1e-12)
    assert np.allclose(a.aoa_rad, math.pi - b.aod_rad, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(hyps)
def test_reversal_negates(h):
    pos = (h.x1_m, h.y1_m)
    f = doppler_at(pos, h.v_m_s, h.theta_rad, D, FC)
    g = doppler_at(pos, h.v_m_s, h.theta_rad + math.pi, D, FC)
    assert g == pytest.approx(-f, abs=1e-9)


def central_difference(pos, v, th, eps=1e-6):
    def f(p):
        return doppler_at((p[0], p[1]), p[2], p[3], D, FC)

    p0 = np.array([pos[0], pos[1], v, th])
    out = np.empty(4)
    for i in range(4):
        step = np.zeros(4)
        step[i] = eps
        out[i] = (f(p0 + step) - f(p0 - step)) / (2 * eps)
    return out


def test_gradient_spot():
    pos, v, th = (1.2, 0.9), 1.1, math.radians(260)
    g = doppler_gradient(pos, v, th, D, FC)
    assert np.allclose(g, central_difference(pos, v, th), rtol=1e-4, atol=1e-6)
