"""Passive mmWave blockage prediction from bistatic Doppler and angle-of-arrival."""

from .clutter import ClutterConfig, cancel_clutter
from .detector import (CafSurface, DetectorSettings, DopplerGrid, FeatureMatrix, FeatureVector,
                       cfar_threshold, compute_caf, detect_dwells, extract_feature)
from .estimator import (EstimatorSettings, MatchWeights, PredictionResult, SearchGrid,
                        estimate_trajectory, predict, predict_from_features, smooth_traces)
from .harness import ExperimentSpec, TrialRecord, run_experiment, run_trial
from .motion_model import MotionHypothesis, angles_at, doppler_at, predict_features
from .scenario import (BeamSet, BlockerTruth, ConfigError, RadioParams, ScenarioConfig,
                       ground_truth_blockage, noiseless_preset, realistic_preset)
from .waveform import DwellPair, synth_dwell, synth_period

__version__ = "0.1.0"
