"""Monte Carlo experiments: accuracy versus sensing duration and warning time."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .clutter import ClutterConfig
from .detector import DetectorSettings, FeatureMatrix, detect_dwells
from .estimator import EstimatorSettings, PredictionResult, predict_from_features
from .scenario import (BlockerTruth, ConfigError, ScenarioConfig, ground_truth_blockage,
                       realistic_preset)
from .waveform import iter_dwells

DEFAULT_DURATIONS = (0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0)


@dataclass(frozen=True)
class ExperimentSpec:
    base: ScenarioConfig = field(default_factory=realistic_preset)
    trial_count: int = 100
    blocking_fraction: float = 0.8
    x1_range_m: tuple[float, float] = (0.3, 3.2)
    y1_range_m: tuple[float, float] = (1.0, 3.0)
    speed_range_m_s: tuple[float, float] = (0.5, 1.3)
    heading_range_deg: tuple[float, float] = (200.0, 340.0)
    # start points must lie inside this receiver-side angular sector (degrees
    # from the -x axis as seen at the receiver); None means the swept beam
    # coverage, an empty tuple disables the check
    start_sector_deg: Optional[tuple[float, ...]] = None
    sensing_durations_s: tuple[float, ...] = DEFAULT_DURATIONS
    # blocking trajectories must not cross before this time; None means the
    # longest sensing duration plus one sweep
    min_crossing_time_s: Optional[float] = None
    decision_threshold: float = 0.9
    warning_bin_edges_s: tuple[float, ...] = (0.0, 0.6, 1.2, 1.8, 2.4, 3.0)
    rng_seed: int = 0
    max_sampling_attempts: int = 10_000
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    clutter: ClutterConfig = field(default_factory=ClutterConfig)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sensing_durations_s", tuple(self.sensing_durations_s))
        if self.trial_count < 1:
            raise ConfigError("trial_count must be >= 1")
        if not 0.0 <= self.blocking_fraction <= 1.0:
            raise ConfigError("blocking_fraction must lie in [0, 1]")
        if not self.sensing_durations_s:
            raise ConfigError("at least one sensing duration is required")
        td = self.base.radio.sweep_period_s
        for dur in self.sensing_durations_s:
            k = dur / td
            if dur <= 0 or abs(k - round(k)) > 1e-6:
                raise ConfigError(f"sensing duration {dur} is not a positive multiple of {td}")

    def start_sector_rad(self) -> Optional[tuple[float, float]]:
        if self.start_sector_deg is None:
            b = self.base.beams
            lo = min(b.boresights_rad) - b.beamwidth_rad / 2
            hi = max(b.boresights_rad) + b.beamwidth_rad / 2
            return lo, hi
        if len(self.start_sector_deg) == 0:
            return None
        lo, hi = self.start_sector_deg
        return math.radians(lo), math.radians(hi)

    @property
    def sweep_period_s(self) -> float:
        return self.base.radio.sweep_period_s

    def periods_for(self, duration_s: float) -> int:
        return int(round(duration_s / self.sweep_period_s))

    @property
    def max_periods(self) -> int:
        return max(self.periods_for(d) for d in self.sensing_durations_s)

    @property
    def crossing_floor_s(self) -> float:
        if self.min_crossing_time_s is not None:
            return self.min_crossing_time_s
        return max(self.sensing_durations_s) + self.sweep_period_s

    def is_blocking_trial(self, trial_id: int) -> bool:
        """Spreads the blocking quota evenly over trial ids."""
        f = self.blocking_fraction
        return math.floor((trial_id + 1) * f + 1e-9) - math.floor(trial_id * f + 1e-9) == 1


@dataclass(frozen=True)
class DurationOutcome:
    duration_s: float
    num_periods: int
    num_detections: int
    prediction: Optional[PredictionResult]
    correct: bool

    @property
    def predicted_blocks(self) -> bool:
        return bool(self.prediction is not None and self.prediction.blocks)

    def to_json(self) -> dict:
        out = {"duration_s": self.duration_s, "num_periods": self.num_periods,
               "num_detections": self.num_detections,
               "outcome": "prediction" if self.prediction is not None else "no-detection",
               "predicted_blocks": self.predicted_blocks, "correct": self.correct}
        if self.prediction is not None:
            out.update(self.prediction.to_json())
        return out


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    truth: BlockerTruth
    blocks: bool
    crossing_time_s: Optional[float]
    outcomes: tuple[DurationOutcome, ...]

    @property
    def correct(self) -> dict[float, bool]:
        return {o.duration_s: o.correct for o in self.outcomes}

    def to_json(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "truth": {"x1": self.truth.initial_position_m[0],
                      "y1": self.truth.initial_position_m[1],
                      "v": self.truth.speed_m_s,
                      "theta_deg": math.degrees(self.truth.heading_rad),
                      "blocks": self.blocks, "crossing_time_s": self.crossing_time_s},
            "durations": [o.to_json() for o in self.outcomes],
        }


def sample_truth(spec: ExperimentSpec, trial_id: int) -> BlockerTruth:
    """Uniform draw over the configured ranges, rejected until the start point
    lies in the start sector and the trial's blocking label is met."""
    want = spec.is_blocking_trial(trial_id)
    rng = np.random.default_rng(np.random.SeedSequence([spec.rng_seed, trial_id, 0x7A]))
    d = spec.base.radio.tx_rx_distance_m
    gain = spec.base.blocker.scatter_gain_db if spec.base.blocker else 10.0
    sector = spec.start_sector_rad()
    for _ in range(spec.max_sampling_attempts):
        x1 = rng.uniform(*spec.x1_range_m)
        y1 = rng.uniform(*spec.y1_range_m)
        v = rng.uniform(*spec.speed_range_m_s)
        th = math.radians(rng.uniform(*spec.heading_range_deg))
        if sector is not None and not sector[0] <= math.atan2(y1, d - x1) <= sector[1]:
            continue
        truth = BlockerTruth((x1, y1), v, th, gain)
        hit, t = ground_truth_blockage(truth, d)
        if want and hit and t >= spec.crossing_floor_s:
            return truth
        if not want and not hit:
            return truth
    raise RuntimeError(f"trial {trial_id}: could not sample a "
                       f"{'blocking' if want else 'non-blocking'} trajectory")


def trial_scenario(spec: ExperimentSpec, trial_id: int, truth: BlockerTruth) -> ScenarioConfig:
    seed = int(np.random.SeedSequence([spec.rng_seed, trial_id, 0x51]).generate_state(1)[0])
    return replace(spec.base, blocker=truth, num_sweep_periods=spec.max_periods, rng_seed=seed)


def evaluate_features(spec: ExperimentSpec, fm: FeatureMatrix, label: bool,
                      use_numba: Optional[bool] = None) -> tuple[DurationOutcome, ...]:
    radio = spec.base.radio
    est = replace(spec.estimator, decision_threshold=spec.decision_threshold)
    out = []
    for dur in spec.sensing_durations_s:
        k = spec.periods_for(dur)
        sub = fm.head(k)
        n_det = sum(f.detected for f in sub.features)
        pred = predict_from_features(sub, radio.tx_rx_distance_m, radio.carrier_frequency_hz,
                                     est, use_numba=use_numba)
        blocks = pred is not None and pred.blocks
        out.append(DurationOutcome(dur, k, n_det, pred, blocks == label))
    return tuple(out)


def run_trial(spec: ExperimentSpec, trial_id: int) -> TrialRecord:
    truth = sample_truth(spec, trial_id)
    label, t_cross = ground_truth_blockage(truth, spec.base.radio.tx_rx_distance_m)
    cfg = trial_scenario(spec, trial_id, truth)
    fm, _ = detect_dwells(iter_dwells(cfg), cfg.beams, spec.clutter, spec.detector)
    return TrialRecord(trial_id, truth, label, t_cross, evaluate_features(spec, fm, label))


# --------------------------------------------------------------------------
# aggregation

@dataclass(frozen=True)
class AccuracyRow:
    key_lo: float
    key_hi: float
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


def accuracy_vs_duration(records: Sequence[TrialRecord],
                         durations: Optional[Sequence[float]] = None) -> list[AccuracyRow]:
    if durations is None:
        durations = [o.duration_s for o in records[0].outcomes]
    rows = []
    for dur in durations:
        hits = [r.correct[dur] for r in records]
        rows.append(AccuracyRow(dur, dur, int(sum(hits)), len(hits)))
    return rows


def accuracy_vs_warning_time(records: Sequence[TrialRecord],
                             edges: Sequence[float]) -> list[AccuracyRow]:
    """Fraction of blocking (trial, duration) pairs predicted as blocking,
    binned by the true time remaining until the crossing. Empty bins are
    omitted."""
    pairs = []
    for r in records:
        if not r.blocks or r.crossing_time_s is None:
            continue
        for o in r.outcomes:
            remaining = r.crossing_time_s - o.duration_s
            if remaining > 0:
                pairs.append((remaining, o.predicted_blocks))
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = [b for w, b in pairs if lo < w <= hi]
        if inside:
            rows.append(AccuracyRow(lo, hi, int(sum(inside)), len(inside)))
    return rows


@dataclass(frozen=True)
class ExperimentResult:
    spec: ExperimentSpec
    records: tuple[TrialRecord, ...]

    @property
    def duration_table(self) -> list[AccuracyRow]:
        return accuracy_vs_duration(self.records, self.spec.sensing_durations_s)

    @property
    def warning_table(self) -> list[AccuracyRow]:
        return accuracy_vs_warning_time(self.records, self.spec.warning_bin_edges_s)

    def accuracy_at(self, duration_s: float) -> float:
        for row in self.duration_table:
            if abs(row.key_lo - duration_s) < 1e-9:
                return row.accuracy
        raise KeyError(duration_s)


def run_experiment(spec: ExperimentSpec, threads: int = 1,
                   progress: Optional[Callable[[TrialRecord], None]] = None) -> ExperimentResult:
    ids = range(spec.trial_count)
    if threads <= 1:
        records = []
        for i in ids:
            rec = run_trial(spec, i)
            records.append(rec)
            if progress:
                progress(rec)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda i: run_trial(spec, i), ids))
        if progress:
            for rec in records:
                progress(rec)
    return ExperimentResult(spec, tuple(records))


def write_experiment(out_dir: Union[str, Path], result: ExperimentResult) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "accuracy_vs_duration.csv", out / "accuracy_vs_warning_time.csv",
             out / "trials.json"]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["duration_s", "correct", "total", "accuracy"])
        for r in result.duration_table:
            w.writerow([repr(r.key_lo), r.correct, r.total, repr(r.accuracy)])
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["warning_lo_s", "warning_hi_s", "correct", "total", "accuracy"])
        for r in result.warning_table:
            w.writerow([repr(r.key_lo), repr(r.key_hi), r.correct, r.total, repr(r.accuracy)])
    paths[2].write_text(json.dumps([r.to_json() for r in result.records], indent=1) + "\n")
    return paths


def plot_experiment(out_dir: Union[str, Path], result: ExperimentResult) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
    dt = result.duration_table
    a.plot([r.key_lo for r in dt], [r.accuracy for r in dt], "o-")
    a.set_xlabel("sensing duration (s)")
    a.set_ylabel("prediction accuracy")
    wt = result.warning_table
    b.plot([r.key_hi for r in wt], [r.accuracy for r in wt], "s-")
    b.set_xlabel("warning time bin upper edge (s)")
    b.set_ylabel("blockage detection accuracy")
    for ax in (a, b):
        ax.set_ylim(0, 1.05)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(out_dir) / "accuracy.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
