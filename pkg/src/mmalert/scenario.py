"""Ground-truth world description: geometry, blocker motion, beams, radio.

Coordinate frame: transmitter at the origin, receiver at ``(d, 0)``, blocker
in the half-plane ``y > 0``. Headings are counterclockwise from ``+x``.
Config files use degrees; everything in memory is radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

LIGHT_SPEED_M_S = 299_792_458.0
TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class RadioParams:
    carrier_frequency_hz: float = 60e9
    sample_rate_hz: float = 1e6
    dwell_duration_s: float = 0.025
    num_beams: int = 4
    tx_rx_distance_m: float = 3.5
    light_speed_m_s: float = LIGHT_SPEED_M_S

    def __post_init__(self) -> None:
        for name in ("carrier_frequency_hz", "sample_rate_hz", "dwell_duration_s",
                     "tx_rx_distance_m", "light_speed_m_s"):
            _require(getattr(self, name) > 0, f"{name} must be > 0")
        _require(self.num_beams >= 1, "num_beams must be >= 1")
        _require(self.light_speed_m_s == LIGHT_SPEED_M_S, "light speed is fixed")

    @property
    def sample_period_s(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def sweep_period_s(self) -> float:
        return self.num_beams * self.dwell_duration_s

    @property
    def samples_per_dwell(self) -> int:
        # tolerance guards 0.025 * 1e6 evaluating to 24999.999...
        return int(math.floor(self.dwell_duration_s * self.sample_rate_hz + 1e-6))


@dataclass(frozen=True)
class BeamSet:
    """Surveillance beam boresights, measured at the receiver from the
    receiver-to-transmitter direction, positive toward ``y > 0``."""

    surveillance_boresights_deg: tuple[float, ...] = (40.0, 27.0, 18.0, 10.0)
    beamwidth_deg: float = 10.0
    sidelobe_floor_db: float = -15.0

    def __post_init__(self) -> None:
        b = tuple(float(x) for x in self.surveillance_boresights_deg)
        object.__setattr__(self, "surveillance_boresights_deg", b)
        _require(len(b) >= 1, "at least one surveillance beam is required")
        _require(len(set(b)) == len(b), "surveillance boresights must be distinct")
        _require(self.beamwidth_deg > 0, "beamwidth_deg must be > 0")
        _require(self.sidelobe_floor_db < 0, "sidelobe_floor_db must be < 0")

    @property
    def num_beams(self) -> int:
        return len(self.surveillance_boresights_deg)

    @property
    def boresights_rad(self) -> np.ndarray:
        return np.deg2rad(np.asarray(self.surveillance_boresights_deg))

    @property
    def beamwidth_rad(self) -> float:
        return math.radians(self.beamwidth_deg)

    @property
    def sidelobe_floor_linear(self) -> float:
        return 10.0 ** (self.sidelobe_floor_db / 10.0)

    def aoa_of_beam(self, beam_index: int) -> float:
        """Model AoA (receiver frame of the motion model) of a 1-based beam."""
        return math.pi - float(self.boresights_rad[beam_index - 1])


@dataclass(frozen=True)
class BlockerTruth:
    initial_position_m: tuple[float, float] = (1.75, 1.8)
    speed_m_s: float = 1.0
    heading_rad: float = 1.5 * math.pi
    scatter_gain_db: float = 10.0

    def __post_init__(self) -> None:
        x, y = (float(c) for c in self.initial_position_m)
        object.__setattr__(self, "initial_position_m", (x, y))
        _require(self.speed_m_s >= 0, "speed_m_s must be >= 0")
        _require(y > 0, "blocker must start in the half-plane y > 0")
        object.__setattr__(self, "heading_rad", float(self.heading_rad) % TWO_PI)


@dataclass(frozen=True)
class StaticPath:
    delay_bins: int
    gain_db: float

    def __post_init__(self) -> None:
        _require(int(self.delay_bins) == self.delay_bins and self.delay_bins >= 0,
                 "static clutter delays must be non-negative integers")
        object.__setattr__(self, "delay_bins", int(self.delay_bins))


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete simulated world.

    Power levels are in dB relative to a nominal 0 dB noise floor, and the
    transmitted sequence has unit power. ``noise_power_db=None`` disables
    noise in both receive chains.
    """

    radio: RadioParams = field(default_factory=RadioParams)
    beams: BeamSet = field(default_factory=BeamSet)
    blocker: Optional[BlockerTruth] = field(default_factory=BlockerTruth)
    static_clutter: tuple[StaticPath, ...] = (
        StaticPath(1, 30.0), StaticPath(3, 24.0), StaticPath(6, 18.0))
    los_power_db: float = 30.0
    leakage_rel_db: float = -10.0
    noise_power_db: Optional[float] = 0.0
    num_sweep_periods: int = 20
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "static_clutter", tuple(self.static_clutter))
        _require(self.num_sweep_periods >= 1, "num_sweep_periods must be >= 1")
        _require(self.beams.num_beams == self.radio.num_beams,
                 "number of boresights must equal radio.num_beams")
        n = self.radio.samples_per_dwell
        for p in self.static_clutter:
            _require(p.delay_bins < n, "clutter delay exceeds dwell length")

    @property
    def noiseless(self) -> bool:
        return self.noise_power_db is None

    def with_blocker(self, blocker: Optional[BlockerTruth]) -> "ScenarioConfig":
        return replace(self, blocker=blocker)


def blocker_position_at(truth: BlockerTruth, elapsed_s: float) -> tuple[float, float]:
    """Closed-form constant-velocity position after ``elapsed_s`` seconds."""
    if elapsed_s < 0:
        raise ValueError("elapsed_s must be >= 0")
    x1, y1 = truth.initial_position_m
    step = truth.speed_m_s * elapsed_s
    return (x1 + step * math.cos(truth.heading_rad),
            y1 + step * math.sin(truth.heading_rad))


def ray_crosses_los(x1: float, y1: float, v: float, theta: float,
                    d: float) -> tuple[bool, Optional[float]]:
    """Ray from ``(x1, y1)`` against the open segment ``0 < x < d`` on ``y = 0``."""
    vy = v * math.sin(theta)
    if v <= 0 or vy >= -1e-12 or y1 <= 0:
        return False, None
    t = -y1 / vy
    x = x1 + v * math.cos(theta) * t
    if 0.0 < x < d:
        return True, t
    return False, None


def ground_truth_blockage(truth: BlockerTruth, d: float) -> tuple[bool, Optional[float]]:
    if d <= 0:
        raise ValueError("d must be > 0")
    x1, y1 = truth.initial_position_m
    return ray_crosses_los(x1, y1, truth.speed_m_s, truth.heading_rad, d)


# --------------------------------------------------------------------------
# config files

def _get(section: dict, key: str, default: Any) -> Any:
    return section.get(key, default) if section else default


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from the nested ``scenario`` mapping."""
    data = data or {}
    known = {"radio", "beams", "blocker", "static_clutter", "los_power_db",
             "leakage_rel_db", "noise_power_db", "num_sweep_periods", "rng_seed"}
    unknown = set(data) - known
    _require(not unknown, f"unknown scenario keys: {sorted(unknown)}")
    dflt = ScenarioConfig()
    r = data.get("radio") or {}
    beams = data.get("beams") or {}
    boresights = tuple(_get(beams, "surveillance_boresights_deg",
                            dflt.beams.surveillance_boresights_deg))
    radio = RadioParams(
        carrier_frequency_hz=float(_get(r, "carrier_frequency_hz", dflt.radio.carrier_frequency_hz)),
        sample_rate_hz=float(_get(r, "sample_rate_hz", dflt.radio.sample_rate_hz)),
        dwell_duration_s=float(_get(r, "dwell_duration_s", dflt.radio.dwell_duration_s)),
        num_beams=len(boresights),
        tx_rx_distance_m=float(_get(r, "tx_rx_distance_m", dflt.radio.tx_rx_distance_m)),
    )
    if "sweep_period_s" in r:
        _require(math.isclose(float(r["sweep_period_s"]), radio.sweep_period_s, rel_tol=1e-9),
                 "radio.sweep_period_s must equal num_beams * dwell_duration_s")
    beam_set = BeamSet(
        surveillance_boresights_deg=boresights,
        beamwidth_deg=float(_get(beams, "beamwidth_deg", dflt.beams.beamwidth_deg)),
        sidelobe_floor_db=float(_get(beams, "sidelobe_floor_db", dflt.beams.sidelobe_floor_db)),
    )
    blocker: Optional[BlockerTruth]
    if "blocker" in data and data["blocker"] is None:
        blocker = None
    else:
        b = data.get("blocker") or {}
        assert dflt.blocker is not None
        blocker = BlockerTruth(
            initial_position_m=tuple(_get(b, "initial_position_m", dflt.blocker.initial_position_m)),
            speed_m_s=float(_get(b, "speed_m_s", dflt.blocker.speed_m_s)),
            heading_rad=math.radians(float(_get(b, "heading_deg",
                                                math.degrees(dflt.blocker.heading_rad)))),
            scatter_gain_db=float(_get(b, "scatter_gain_db", dflt.blocker.scatter_gain_db)),
        )
    if "static_clutter" in data:
        clutter = tuple(StaticPath(int(p["delay_bins"]), float(p["gain_db"]))
                        for p in (data["static_clutter"] or []))
    else:
        clutter = dflt.static_clutter
    noise = data.get("noise_power_db", dflt.noise_power_db)
    try:
        return ScenarioConfig(
            radio=radio, beams=beam_set, blocker=blocker, static_clutter=clutter,
            los_power_db=float(data.get("los_power_db", dflt.los_power_db)),
            leakage_rel_db=float(data.get("leakage_rel_db", dflt.leakage_rel_db)),
            noise_power_db=None if noise is None else float(noise),
            num_sweep_periods=int(data.get("num_sweep_periods", dflt.num_sweep_periods)),
            rng_seed=int(data.get("rng_seed", dflt.rng_seed)),
        )
    except (TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    out: dict[str, Any] = {
        "radio": {
            "carrier_frequency_hz": cfg.radio.carrier_frequency_hz,
            "sample_rate_hz": cfg.radio.sample_rate_hz,
            "dwell_duration_s": cfg.radio.dwell_duration_s,
            "tx_rx_distance_m": cfg.radio.tx_rx_distance_m,
        },
        "beams": {
            "surveillance_boresights_deg": list(cfg.beams.surveillance_boresights_deg),
            "beamwidth_deg": cfg.beams.beamwidth_deg,
            "sidelobe_floor_db": cfg.beams.sidelobe_floor_db,
        },
        "blocker": None,
        "static_clutter": [{"delay_bins": p.delay_bins, "gain_db": p.gain_db}
                           for p in cfg.static_clutter],
        "los_power_db": cfg.los_power_db,
        "leakage_rel_db": cfg.leakage_rel_db,
        "noise_power_db": cfg.noise_power_db,
        "num_sweep_periods": cfg.num_sweep_periods,
        "rng_seed": cfg.rng_seed,
    }
    if cfg.blocker is not None:
        out["blocker"] = {
            "initial_position_m": list(cfg.blocker.initial_position_m),
            "speed_m_s": cfg.blocker.speed_m_s,
            "heading_deg": math.degrees(cfg.blocker.heading_rad),
            "scatter_gain_db": cfg.blocker.scatter_gain_db,
        }
    return out


def realistic_preset(**overrides: Any) -> ScenarioConfig:
    """Echo +10 dB over the noise floor at boresight, clutter +30 dB,
    LoS leakage +20 dB."""
    cfg = ScenarioConfig(
        static_clutter=(StaticPath(1, 30.0), StaticPath(3, 24.0), StaticPath(6, 18.0)),
        los_power_db=30.0, leakage_rel_db=-10.0, noise_power_db=0.0,
    )
    return replace(cfg, **overrides) if overrides else cfg


def noiseless_preset(**overrides: Any) -> ScenarioConfig:
    return realistic_preset(noise_power_db=None, **overrides)


def mirror_truth(truth: BlockerTruth, d: float) -> BlockerTruth:
    """Reflect about the vertical line ``x = d/2``."""
    x1, y1 = truth.initial_position_m
    return replace(truth, initial_position_m=(d - x1, y1),
                   heading_rad=(math.pi - truth.heading_rad) % TWO_PI)


def as_truth(x1: float, y1: float, v: float, theta: float,
             scatter_gain_db: float = 10.0) -> BlockerTruth:
    return BlockerTruth((x1, y1), v, theta, scatter_gain_db)


__all__: Sequence[str] = (
    "LIGHT_SPEED_M_S", "ConfigError", "RadioParams", "BeamSet", "BlockerTruth",
    "StaticPath", "ScenarioConfig", "blocker_position_at", "ground_truth_blockage",
    "ray_crosses_los", "scenario_from_dict", "scenario_to_dict", "realistic_preset",
    "noiseless_preset", "mirror_truth", "as_truth",
)
