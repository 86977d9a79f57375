import numpy as np
import pytest

from mmalert.clutter import ClutterConfig, cancel_clutter, delay_basis
from mmalert.waveform import delayed, gen_tx_baseband

N = 25_000
EXACT = ClutterConfig(4, 0.0)


def noise(seed, n=N):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)


@pytest.fixture(scope="module")
def ref():
    return gen_tx_baseband(11, N)


@pytest.mark.parametrize("cfg", [EXACT, ClutterConfig(4)])
def test_in_span_removed(ref, cfg):
    y = 0.5 * delayed(ref, 2)
    r = cancel_clutter(y, ref, cfg)
    assert np.sum(np.abs(r) ** 2) <= 1e-10 * np.sum(np.abs(y) ** 2)


def test_noise_not_amplified(ref):
    x = noise(1)
    r = cancel_clutter(x, ref, ClutterConfig(8, 0.0))
    assert np.linalg.norm(r) <= np.linalg.norm(x)


def test_idempotent(ref):
    cfg = ClutterConfig(8, 0.0)
    y = 3 * delayed(ref, 1) + noise(2)
    once = cancel_clutter(y, ref, cfg)
    twice = cancel_clutter(once, ref, cfg)
    assert np.linalg.norm(twice - once) <= 1e-8 * np.linalg.norm(once)


def test_linear(ref):
    cfg = ClutterConfig(8, 0.0)
    x, y = noise(3) + delayed(ref, 5), noise(4)
    a, b = 2.5 - 1j, -0.75
    lhs = cancel_clutter(a * x + b * y, ref, cfg)
    rhs = a * cancel_clutter(x, ref, cfg) + b * cancel_clutter(y, ref, cfg)
    assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(lhs)


def test_orthogonal(ref):
    cfg = ClutterConfig(8, 0.0)
    r = cancel_clutter(noise(5) + 4 * delayed(ref, 3), ref, cfg)
    for col in delay_basis(ref, 8).T:
        assert abs(np.vdot(col, r)) <= 1e-6 * np.linalg.norm(r) * np.linalg.norm(col)


def test_basis_columns(ref):
    b = delay_basis(ref[:10], 3)
    assert b.shape == (10, 3)
    assert np.array_equal(b[:, 2], delayed(ref[:10], 2))


def test_zero_reference_no_crash():
    z = np.zeros(64, complex)
    x = noise(6, 64)
    assert np.allclose(cancel_clutter(x, z, ClutterConfig(4, 0.0)), x)


@pytest.mark.parametrize("kw", [dict(num_delay_bins=0), dict(regularization_epsilon=-1.0)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        ClutterConfig(**kw)


def test_input_checks(ref):
    with pytest.raises(ValueError):
        cancel_clutter(ref[:-1], ref)
    with pytest.raises(ValueError):
        cancel_clutter(ref[:4], ref[:4], ClutterConfig(4))
