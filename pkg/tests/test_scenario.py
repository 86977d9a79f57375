import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmalert.scenario import (BlockerTruth, ConfigError, RadioParams, ScenarioConfig,
                              StaticPath, blocker_position_at, ground_truth_blockage,
                              mirror_truth, scenario_from_dict, scenario_to_dict)

D = 3.5


def test_position_step():
    x, y = blocker_position_at(BlockerTruth((1.0, 2.0), 1.0, 0.0), 0.1)
    assert x == pytest.approx(1.1, abs=1e-12)
    assert y == pytest.approx(2.0, abs=1e-12)


def test_position_static():
    assert blocker_position_at(BlockerTruth((0.4, 2.2), 0.0, 1.3), 5.0) == (0.4, 2.2)


def test_position_reaches_midpoint():
    x, y = blocker_position_at(BlockerTruth((1.75, 1.0), 1.0, 1.5 * math.pi), 1.0)
    assert x == pytest.approx(1.75, abs=1e-12)
    assert y == pytest.approx(0.0, abs=1e-12)


def test_position_rejects_negative_time():
    with pytest.raises(ValueError):
        blocker_position_at(BlockerTruth(), -0.1)


def test_truth_descending_midpoint():
    hit, t = ground_truth_blockage(BlockerTruth((1.75, 1.0), 1.0, 1.5 * math.pi), D)
    assert hit and t == pytest.approx(1.0, abs=1e-12)


def test_truth_moving_away():
    assert ground_truth_blockage(BlockerTruth((1.75, 1.0), 1.0, 0.5 * math.pi), D) == (False, None)


def test_truth_stationary():
    assert ground_truth_blockage(BlockerTruth((1.75, 1.0), 0.0, 4.0), D) == (False, None)


def test_truth_misses_segment():
    # heading down but crossing y = 0 beyond the receiver
    assert not ground_truth_blockage(BlockerTruth((3.0, 1.0), 1.0, math.radians(300)), D)[0]


def test_truth_rejects_bad_distance():
    with pytest.raises(ValueError):
        ground_truth_blockage(BlockerTruth(), 0.0)


truths = st.builds(
    lambda x, y, v, th: BlockerTruth((x, y), v, th),
    st.floats(-1.0, 4.5), st.floats(0.05, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 2 * math.pi))


@settings(max_examples=200, deadline=None)
@given(truths, st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_semigroup(truth, t1, t2):
    # advancing by t1 then t2 is the same translation as advancing by t1 + t2
    once = blocker_position_at(truth, t1 + t2)
    a = blocker_position_at(truth, t1)
    b = blocker_position_at(truth, t2)
    x0, y0 = truth.initial_position_m
    assert a[0] + b[0] - x0 == pytest.approx(once[0], abs=1e-9)
    assert a[1] + b[1] - y0 == pytest.approx(once[1], abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(truths)
def test_mirror_invariance(truth):
    assert ground_truth_blockage(truth, D)[0] == ground_truth_blockage(mirror_truth(truth, D), D)[0]


@settings(max_examples=300, deadline=None)
@given(truths)
def test_crossing_lands_on_segment(truth):
    hit, t = ground_truth_blockage(truth, D)
    if hit:
        x, y = blocker_position_at(truth, t)
        assert abs(y) <= 1e-6
        assert 0 < x < D


def test_heading_wraps():
    assert BlockerTruth(heading_rad=-0.5 * math.pi).heading_rad == pytest.approx(1.5 * math.pi)


@pytest.mark.parametrize("kw", [dict(num_sweep_periods=0),
                                dict(static_clutter=(StaticPath(30000, 1.0),))])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw)


def test_negative_delay_rejected():
    with pytest.raises(ConfigError):
        StaticPath(-1, 0.0)


def test_samples_per_dwell():
    assert RadioParams().samples_per_dwell == 25_000
    assert RadioParams(sample_rate_hz=10e6).samples_per_dwell == 250_000


def test_dict_round_trip():
    cfg = ScenarioConfig(noise_power_db=None, rng_seed=5,
                         blocker=BlockerTruth((0.5, 2.0), 0.7, math.radians(250)))
    back = scenario_from_dict(scenario_to_dict(cfg))
    assert back.blocker.initial_position_m == cfg.blocker.initial_position_m
    assert back.blocker.heading_rad == pytest.approx(cfg.blocker.heading_rad)
    assert back.noise_power_db is None and back.rng_seed == 5
    assert back.static_clutter == cfg.static_clutter


def test_dict_unknown_key():
    with pytest.raises(ConfigError):
        scenario_from_dict({"radios": {}})
