"""YAML configuration for every pipeline stage.

A config file has up to five top-level sections; every key is optional and
falls back to the library default. ``DEFAULT_CONFIG_YAML`` is the annotated
reference for all keys (``mmalert config`` prints it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .clutter import ClutterConfig
from .detector import DetectorSettings, DopplerGrid
from .estimator import EstimatorSettings, MatchWeights, SearchGrid
from .harness import DEFAULT_DURATIONS, ExperimentSpec
from .scenario import ConfigError, ScenarioConfig, scenario_from_dict

DEFAULT_CONFIG_YAML = """\
# Angles are in degrees, powers in dB relative to the receiver noise floor.
scenario:
  radio:
    carrier_frequency_hz: 60.0e9
    sample_rate_hz: 1.0e6
    dwell_duration_s: 0.025      # one beam dwell; sweep period = beams * dwell
    tx_rx_distance_m: 3.5        # Tx at (0, 0), Rx at (d, 0)
  beams:
    surveillance_boresights_deg: [40, 27, 18, 10]   # from the Rx->Tx direction
    beamwidth_deg: 10
    sidelobe_floor_db: -15
  blocker:                       # null for an empty room
    initial_position_m: [1.75, 1.8]
    speed_m_s: 1.0
    heading_deg: 270             # counterclockwise from +x
    scatter_gain_db: 10          # echo power at boresight
  static_clutter:                # zero-Doppler paths seen by the surveillance beam
    - {delay_bins: 1, gain_db: 30}
    - {delay_bins: 3, gain_db: 24}
    - {delay_bins: 6, gain_db: 18}
  los_power_db: 30               # direct path into the reference beam
  leakage_rel_db: -10            # direct-path leakage into the surveillance beam
  noise_power_db: 0.0            # null disables noise
  num_sweep_periods: 20
  rng_seed: 0

clutter:
  num_delay_bins: 8              # width of the delayed-reference basis
  regularization_epsilon: 1.0e-6 # diagonal loading relative to the mean Gram diagonal

detector:
  doppler_max_abs_hz: 500        # grid spans the multiples of the step inside +-this
  doppler_step_hz: 40
  max_delay_bins: 8
  cfar_half_window: 8
  threshold_scale: 2.5           # multiplier on the cell average (1.0 = bare average)
  exclude_cut: false             # drop the cell under test and guard cells from the average
  guard_cells: 1
  min_abs_doppler_hz: null       # null means two grid steps
  refine: true                   # sub-bin Doppler and amplitude-comparison AoA
  refine_points: 65
  aoa_min_dynamic_range_db: 3.0

estimator:
  poly_degree: 3
  outlier_sigma: 3.0
  min_detections: 3
  use_refined_features: true     # false: grid Doppler and beam-index AoA
  indicator: geometric           # geometric | angular
  angle_convention: principal    # principal | atan2, for the angular indicator
  decision_threshold: 0.9
  truncation_penalty: 1.0        # cost per measured period after a hypothesis crosses y = 0
  refine_seeds: 20               # best grid points polished by local least squares; 0 = grid only
  seed_tolerance: 9.0            # seeds must cost <= min * (1 + this)
  weights:
    doppler_per_hz: 0.0025
    aoa_per_rad: 1.9098593171027443  # 1 / (pi / 6)
  grid:                          # [lo, hi, step]; x1 defaults to [0.2, d - 0.2, 0.1]
    x1_m: null
    y1_m: [0.2, 3.0, 0.1]
    v_m_s: [0.2, 2.0, 0.1]
    theta_deg: [0, 355, 5]
    tie_tolerance: 0.05
    absolute_floor: 1.0e-9

experiment:
  trial_count: 100
  blocking_fraction: 0.8
  x1_range_m: [0.3, 3.2]
  y1_range_m: [1.0, 3.0]
  speed_range_m_s: [0.5, 1.3]
  heading_range_deg: [200, 340]
  start_sector_deg: null         # Rx-side angular window for start points; null = beam coverage, [] = off
  sensing_durations_s: [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0]
  min_crossing_time_s: null      # null = longest duration plus one sweep
  warning_bin_edges_s: [0.0, 0.6, 1.2, 1.8, 2.4, 3.0]
  rng_seed: 0
"""

_SECTIONS = ("scenario", "clutter", "detector", "estimator", "experiment")


@dataclass(frozen=True)
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    clutter: ClutterConfig = field(default_factory=ClutterConfig)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)

    def with_seed(self, seed: int) -> "Config":
        return replace(self, scenario=replace(self.scenario, rng_seed=seed),
                       experiment=replace(self.experiment, rng_seed=seed))


def _check_keys(section: str, data: dict, allowed: set) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be a mapping")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")


def _triple(name: str, value) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{name} must be [lo, hi, step]")
    return tuple(float(x) for x in value)


def _pair(name: str, value) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be [lo, hi]")
    lo, hi = float(value[0]), float(value[1])
    if hi < lo:
        raise ConfigError(f"{name} has hi < lo")
    return lo, hi


def _clutter(data: dict) -> ClutterConfig:
    _check_keys("clutter", data, {"num_delay_bins", "regularization_epsilon"})
    d = ClutterConfig()
    return ClutterConfig(int(data.get("num_delay_bins", d.num_delay_bins)),
                         float(data.get("regularization_epsilon", d.regularization_epsilon)))


def _detector(data: dict) -> DetectorSettings:
    keys = {"doppler_max_abs_hz", "doppler_step_hz", "max_delay_bins", "cfar_half_window",
            "threshold_scale", "exclude_cut", "guard_cells", "min_abs_doppler_hz", "refine",
            "refine_points", "aoa_min_dynamic_range_db"}
    _check_keys("detector", data, keys)
    d = DetectorSettings()
    grid = DopplerGrid.symmetric(float(data.get("doppler_max_abs_hz", 500.0)),
                                 float(data.get("doppler_step_hz", d.grid.step_hz)))
    mad = data.get("min_abs_doppler_hz", d.min_abs_doppler_hz)
    out = DetectorSettings(
        grid=grid,
        max_delay_bins=int(data.get("max_delay_bins", d.max_delay_bins)),
        cfar_half_window=int(data.get("cfar_half_window", d.cfar_half_window)),
        threshold_scale=float(data.get("threshold_scale", d.threshold_scale)),
        exclude_cut=bool(data.get("exclude_cut", d.exclude_cut)),
        guard_cells=int(data.get("guard_cells", d.guard_cells)),
        min_abs_doppler_hz=None if mad is None else float(mad),
        refine=bool(data.get("refine", d.refine)),
        refine_points=int(data.get("refine_points", d.refine_points)),
        aoa_min_dynamic_range_db=float(data.get("aoa_min_dynamic_range_db",
                                                d.aoa_min_dynamic_range_db)),
    )
    if out.max_delay_bins < 1 or out.cfar_half_window < 0 or out.threshold_scale <= 0:
        raise ConfigError("detector: max_delay_bins >= 1, cfar_half_window >= 0 and "
                          "threshold_scale > 0 are required")
    return out


def _grid(data: Optional[dict], d: float) -> Optional[SearchGrid]:
    if not data:
        return None
    _check_keys("estimator.grid", data,
                {"x1_m", "y1_m", "v_m_s", "theta_deg", "tie_tolerance", "absolute_floor"})
    base = SearchGrid.default_for(d)
    kw: dict[str, Any] = {}
    for key, attr in (("x1_m", "x1"), ("y1_m", "y1"), ("v_m_s", "v")):
        if data.get(key) is not None:
            kw[attr] = _triple(f"estimator.grid.{key}", data[key])
    if data.get("theta_deg") is not None:
        kw["theta"] = tuple(math.radians(x) for x in _triple("estimator.grid.theta_deg",
                                                             data["theta_deg"]))
    for key in ("tie_tolerance", "absolute_floor"):
        if data.get(key) is not None:
            kw[key] = float(data[key])
    return replace(base, **kw)


def _estimator(data: dict, d: float) -> EstimatorSettings:
    keys = {"poly_degree", "outlier_sigma", "min_detections", "use_refined_features",
            "indicator", "angle_convention", "decision_threshold", "truncation_penalty",
            "refine_seeds", "seed_tolerance", "weights", "grid"}
    _check_keys("estimator", data, keys)
    dflt = EstimatorSettings()
    w = data.get("weights") or {}
    _check_keys("estimator.weights", w, {"doppler_per_hz", "aoa_per_rad"})
    weights = MatchWeights(float(w.get("doppler_per_hz", dflt.weights.w_doppler)),
                           float(w.get("aoa_per_rad", dflt.weights.w_aoa)))
    out = EstimatorSettings(
        poly_degree=int(data.get("poly_degree", dflt.poly_degree)),
        outlier_sigma=float(data.get("outlier_sigma", dflt.outlier_sigma)),
        min_detections=int(data.get("min_detections", dflt.min_detections)),
        use_refined_features=bool(data.get("use_refined_features", dflt.use_refined_features)),
        grid=_grid(data.get("grid"), d),
        weights=weights,
        indicator=str(data.get("indicator", dflt.indicator)),
        angle_convention=str(data.get("angle_convention", dflt.angle_convention)),
        decision_threshold=float(data.get("decision_threshold", dflt.decision_threshold)),
        truncation_penalty=float(data.get("truncation_penalty", dflt.truncation_penalty)),
        refine_seeds=int(data.get("refine_seeds", dflt.refine_seeds)),
        seed_tolerance=float(data.get("seed_tolerance", dflt.seed_tolerance)),
    )
    if out.indicator not in ("geometric", "angular"):
        raise ConfigError(f"estimator.indicator must be geometric or angular, not {out.indicator!r}")
    if out.angle_convention not in ("principal", "atan2"):
        raise ConfigError("estimator.angle_convention must be principal or atan2")
    if out.refine_seeds < 0 or out.seed_tolerance < 0 or out.truncation_penalty < 0:
        raise ConfigError("estimator: refine_seeds, seed_tolerance and truncation_penalty "
                          "must be >= 0")
    if not 0.0 <= out.decision_threshold <= 1.0:
        raise ConfigError("estimator.decision_threshold must lie in [0, 1]")
    return out


def _experiment(data: dict, cfg: Config) -> ExperimentSpec:
    keys = {"trial_count", "blocking_fraction", "x1_range_m", "y1_range_m", "speed_range_m_s",
            "heading_range_deg", "start_sector_deg", "sensing_durations_s",
            "min_crossing_time_s", "warning_bin_edges_s", "rng_seed"}
    _check_keys("experiment", data, keys)
    d = ExperimentSpec(base=cfg.scenario)
    kw: dict[str, Any] = {}
    for key in ("x1_range_m", "y1_range_m", "speed_range_m_s", "heading_range_deg"):
        if key in data:
            kw[key] = _pair(f"experiment.{key}", data[key])
    if "start_sector_deg" in data:
        s = data["start_sector_deg"]
        kw["start_sector_deg"] = None if s is None else (
            () if len(s) == 0 else _pair("experiment.start_sector_deg", s))
    mct = data.get("min_crossing_time_s", d.min_crossing_time_s)
    edges = tuple(float(x) for x in data.get("warning_bin_edges_s", d.warning_bin_edges_s))
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ConfigError("experiment.warning_bin_edges_s must be increasing, length >= 2")
    return ExperimentSpec(
        base=cfg.scenario,
        trial_count=int(data.get("trial_count", d.trial_count)),
        blocking_fraction=float(data.get("blocking_fraction", d.blocking_fraction)),
        sensing_durations_s=tuple(float(x) for x in
                                  data.get("sensing_durations_s", DEFAULT_DURATIONS)),
        min_crossing_time_s=None if mct is None else float(mct),
        decision_threshold=cfg.estimator.decision_threshold,
        warning_bin_edges_s=edges,
        rng_seed=int(data.get("rng_seed", cfg.scenario.rng_seed)),
        detector=cfg.detector, clutter=cfg.clutter, estimator=cfg.estimator,
        **kw,
    )


def config_from_dict(data: Optional[dict]) -> Config:
    data = data or {}
    _check_keys("config", data, set(_SECTIONS))
    try:
        scenario = scenario_from_dict(data.get("scenario") or {})
        d = scenario.radio.tx_rx_distance_m
        cfg = Config(scenario=scenario,
                     clutter=_clutter(data.get("clutter") or {}),
                     detector=_detector(data.get("detector") or {}),
                     estimator=_estimator(data.get("estimator") or {}, d))
        return replace(cfg, experiment=_experiment(data.get("experiment") or {}, cfg))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Union[str, Path, None]) -> Config:
    """Read a YAML config; ``None`` gives the defaults."""
    if path is None:
        return config_from_dict({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(data)
