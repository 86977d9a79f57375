"""Sampled baseband signals for the reference and surveillance beams.

Each dwell is an independent burst: the transmitted sequence is zero before
sample 0, so delayed copies are zero-padded on the left. Per-dwell random
streams derive from ``(rng_seed, period, beam)`` and can be generated in any
order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from .motion_model import doppler_at
from .scenario import LIGHT_SPEED_M_S, ScenarioConfig, blocker_position_at

SeedLike = Union[int, np.random.SeedSequence]

_QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2.0)


@dataclass(frozen=True)
class DwellPair:
    period_index: int
    beam_index: int
    reference_samples: np.ndarray
    surveillance_samples: np.ndarray
    sample_period_s: float

    def __post_init__(self) -> None:
        if self.reference_samples.shape != self.surveillance_samples.shape:
            raise ValueError("reference and surveillance lengths differ")
        if self.beam_index < 1:
            raise ValueError("beam_index is 1-based")

    @property
    def n_samples(self) -> int:
        return len(self.reference_samples)


@dataclass(frozen=True)
class BeamPatternModel:
    boresight_rad: float
    beamwidth_rad: float
    sidelobe_floor_linear: float


def gen_tx_baseband(seed: SeedLike, n_samples: int) -> np.ndarray:
    """Unit-power QPSK sequence reproducible from ``seed``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    return _QPSK[rng.integers(0, 4, size=n_samples)]


def beam_gain(model: BeamPatternModel, angle_rad) -> np.ndarray | float:
    """Power gain of a Gaussian mainlobe clamped to the sidelobe floor."""
    off = np.angle(np.exp(1j * (np.asarray(angle_rad, dtype=float) - model.boresight_rad)))
    g = np.maximum(np.exp(-4.0 * math.log(2.0) * (off / model.beamwidth_rad) ** 2),
                   model.sidelobe_floor_linear)
    return float(g) if g.ndim == 0 else g


def beam_models(cfg: ScenarioConfig) -> list[BeamPatternModel]:
    b = cfg.beams
    return [BeamPatternModel(float(psi), b.beamwidth_rad, b.sidelobe_floor_linear)
            for psi in b.boresights_rad]


def delayed(x: np.ndarray, k: int) -> np.ndarray:
    """``x[n - k]`` with zeros for ``n < k``."""
    if k == 0:
        return x.copy()
    out = np.zeros_like(x)
    if k < len(x):
        out[k:] = x[: len(x) - k]
    return out


def _dwell_seed(cfg: ScenarioConfig, i: int, m: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.rng_seed, i, m])


def static_path_gains(cfg: ScenarioConfig) -> np.ndarray:
    """Complex amplitudes of the static paths (phases fixed by the seed)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 0xC1]))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=len(cfg.static_clutter))
    amps = np.array([10.0 ** (p.gain_db / 20.0) for p in cfg.static_clutter])
    return amps * np.exp(1j * phases)


def leakage_gain(cfg: ScenarioConfig) -> complex:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 0x1E]))
    amp = 10.0 ** ((cfg.los_power_db + cfg.leakage_rel_db) / 20.0)
    return complex(amp * np.exp(1j * rng.uniform(0.0, 2.0 * math.pi)))


def dwell_midpoint_s(cfg: ScenarioConfig, i: int, m: int) -> float:
    r = cfg.radio
    return (i - 1) * r.sweep_period_s + (m - 0.5) * r.dwell_duration_s


@dataclass(frozen=True)
class EchoState:
    """Blocker echo parameters frozen for one dwell."""

    doppler_hz: float
    amplitude: complex
    delay_bins: int
    aoa_rad: float
    beam_power_gain: float


def echo_state(cfg: ScenarioConfig, i: int, m: int) -> Optional[EchoState]:
    """Echo of the blocker in dwell ``(i, m)``, or ``None`` when there is no
    blocker or it has left the sensed half-plane."""
    truth = cfg.blocker
    if truth is None:
        return None
    r = cfg.radio
    d = r.tx_rx_distance_m
    x, y = blocker_position_at(truth, dwell_midpoint_s(cfg, i, m))
    if y <= 0:
        return None
    fd = doppler_at((x, y), truth.speed_m_s, truth.heading_rad, d, r.carrier_frequency_hz)
    aoa = math.atan2(y, x - d)
    gain = float(beam_gain(beam_models(cfg)[m - 1], math.pi - aoa))
    path = math.hypot(x, y) + math.hypot(x - d, y)
    delay = int(round((path - d) / LIGHT_SPEED_M_S * r.sample_rate_hz))
    phase = -2.0 * math.pi * r.carrier_frequency_hz * path / LIGHT_SPEED_M_S
    amp = math.sqrt(10.0 ** (truth.scatter_gain_db / 10.0) * gain)
    return EchoState(fd, amp * complex(math.cos(phase), math.sin(phase)), delay, aoa, gain)


def synth_dwell(cfg: ScenarioConfig, period_index: int, beam_index: int) -> DwellPair:
    i, m = period_index, beam_index
    if not 1 <= i <= cfg.num_sweep_periods:
        raise ValueError(f"period index {i} outside 1..{cfg.num_sweep_periods}")
    if not 1 <= m <= cfg.radio.num_beams:
        raise ValueError(f"beam index {m} outside 1..{cfg.radio.num_beams}")
    r = cfg.radio
    n = r.samples_per_dwell
    ts = r.sample_period_s
    tx_seed, noise_seed = _dwell_seed(cfg, i, m).spawn(2)
    s = gen_tx_baseband(tx_seed, n)

    ref = (10.0 ** (cfg.los_power_db / 20.0)) * s
    surv = leakage_gain(cfg) * s
    for path, g in zip(cfg.static_clutter, static_path_gains(cfg)):
        surv = surv + g * delayed(s, path.delay_bins)

    echo = echo_state(cfg, i, m)
    if echo is not None:
        tone = np.exp(-2j * math.pi * echo.doppler_hz * ts * np.arange(n))
        surv = surv + echo.amplitude * delayed(s, echo.delay_bins) * tone

    if cfg.noise_power_db is not None:
        rng = np.random.default_rng(noise_seed)
        sigma = math.sqrt(10.0 ** (cfg.noise_power_db / 10.0) / 2.0)
        noise = rng.standard_normal((4, n)) * sigma
        ref = ref + (noise[0] + 1j * noise[1])
        surv = surv + (noise[2] + 1j * noise[3])
    return DwellPair(i, m, ref, surv, ts)


def synth_period(cfg: ScenarioConfig, period_index: int) -> list[DwellPair]:
    return [synth_dwell(cfg, period_index, m) for m in range(1, cfg.radio.num_beams + 1)]


def iter_dwells(cfg: ScenarioConfig, num_periods: Optional[int] = None) -> Iterator[DwellPair]:
    for i in range(1, (num_periods or cfg.num_sweep_periods) + 1):
        yield from synth_period(cfg, i)


# --------------------------------------------------------------------------
# dwell dumps: little-endian float32 interleaved I/Q + JSON sidecar

def _stem(i: int, m: int) -> str:
    return f"dwell_p{i:04d}_b{m:02d}"


def write_dwell(directory: Union[str, Path], dwell: DwellPair) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = _stem(dwell.period_index, dwell.beam_index)
    for tag, x in (("ref", dwell.reference_samples), ("surv", dwell.surveillance_samples)):
        iq = np.empty(2 * len(x), dtype="<f4")
        iq[0::2] = x.real
        iq[1::2] = x.imag
        iq.tofile(directory / f"{stem}_{tag}.iq")
    header = {
        "n_samples": dwell.n_samples,
        "sample_period_s": dwell.sample_period_s,
        "period_index": dwell.period_index,
        "beam_index": dwell.beam_index,
        "format": "complex64 interleaved I/Q, little-endian float32",
        "reference_file": f"{stem}_ref.iq",
        "surveillance_file": f"{stem}_surv.iq",
    }
    path = directory / f"{stem}.json"
    path.write_text(json.dumps(header, indent=2) + "\n")
    return path


def _read_iq(path: Path, n: int) -> np.ndarray:
    iq = np.fromfile(path, dtype="<f4")
    if len(iq) != 2 * n:
        raise ValueError(f"{path}: expected {n} complex samples, found {len(iq) / 2}")
    return (iq[0::2].astype(np.float64) + 1j * iq[1::2].astype(np.float64))


def read_dwell(header_path: Union[str, Path]) -> DwellPair:
    header_path = Path(header_path)
    h = json.loads(header_path.read_text())
    n = int(h["n_samples"])
    return DwellPair(
        period_index=int(h["period_index"]),
        beam_index=int(h["beam_index"]),
        reference_samples=_read_iq(header_path.parent / h["reference_file"], n),
        surveillance_samples=_read_iq(header_path.parent / h["surveillance_file"], n),
        sample_period_s=float(h["sample_period_s"]),
    )


def read_dwell_dir(directory: Union[str, Path]) -> list[DwellPair]:
    headers = sorted(Path(directory).glob("dwell_p*_b*.json"))
    return [read_dwell(p) for p in headers]
