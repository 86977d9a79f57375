"""Command-line entry point: ``mmalert {simulate,detect,estimate,experiment,config}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .clutter import ClutterConfig
from .config import DEFAULT_CONFIG_YAML, Config, load_config
from .detector import detect_dwells, read_feature_csv, write_feature_csv, write_spectrogram_csv
from .estimator import MatchWeights, predict_from_features
from .harness import plot_experiment, run_experiment, write_experiment
from .scenario import ConfigError, ground_truth_blockage, scenario_to_dict
from .waveform import iter_dwells, read_dwell_dir, write_dwell

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("mmalert")


def _global_flags(sub: bool) -> argparse.ArgumentParser:
    # on subcommands the flags must not overwrite values given before them
    def dflt(v):
        return argparse.SUPPRESS if sub else v

    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", type=Path, default=dflt(None),
                   help="YAML config file (see `mmalert config`)")
    g.add_argument("--seed", type=int, default=dflt(None),
                   help="master seed; overrides scenario and experiment seeds")
    g.add_argument("--threads", type=int, default=dflt(1), help="worker threads for experiments")
    g.add_argument("--out-dir", type=Path, default=dflt(Path(".")), help="output directory")
    g.add_argument("-v", "--verbose", action="store_true", default=dflt(False))
    return p


def _triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected lo,hi,step")
    return tuple(float(x) for x in parts)


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(sub=True)
    parser = argparse.ArgumentParser(
        prog="mmalert", parents=[_global_flags(sub=False)],
        description="Passive mmWave blockage prediction: simulate, detect, estimate, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sim = sub.add_parser("simulate", parents=[common],
                         help="synthesize dwell dumps (binary I/Q plus JSON headers)")
    sim.add_argument("--periods", type=int, help="number of sweep periods (default from config)")

    det = sub.add_parser("detect", parents=[common],
                         help="dwell dumps -> spectrogram CSVs and feature CSV")
    det.add_argument("--dwells", type=Path, help="dwell directory (default OUT_DIR/dwells)")
    det.add_argument("--clutter-bins", type=int, help="delay taps in the cancellation basis")
    det.add_argument("--clutter-eps", type=float, help="relative diagonal loading")
    det.add_argument("--plot", action="store_true", help="also write spectrogram PNGs")

    est = sub.add_parser("estimate", parents=[common],
                         help="feature CSV -> prediction JSON")
    est.add_argument("--features", type=Path, help="feature CSV (default OUT_DIR/features.csv)")
    est.add_argument("--periods", type=int, help="use only the first K periods")
    est.add_argument("--grid-x1", type=_triple, metavar="LO,HI,STEP")
    est.add_argument("--grid-y1", type=_triple, metavar="LO,HI,STEP")
    est.add_argument("--grid-v", type=_triple, metavar="LO,HI,STEP")
    est.add_argument("--grid-theta", type=_triple, metavar="LO,HI,STEP", help="degrees")
    est.add_argument("--tie-tolerance", type=float)
    est.add_argument("--w-doppler", type=float, help="Doppler weight, 1/Hz")
    est.add_argument("--w-aoa", type=float, help="AoA weight, 1/rad")
    est.add_argument("--indicator", choices=("geometric", "angular"))
    est.add_argument("--angle-convention", choices=("principal", "atan2"))
    est.add_argument("--threshold", type=float, help="decision threshold on P_B")
    est.add_argument("--grid-only", action="store_true",
                     help="skip the continuous refinement; decide on grid points alone")

    exp = sub.add_parser("experiment", parents=[common],
                         help="Monte Carlo accuracy tables")
    exp.add_argument("--trials", type=int, help="override experiment.trial_count")
    exp.add_argument("--plot", action="store_true", help="also write accuracy.png")

    sub.add_parser("config", parents=[common], help="print the annotated default config")
    return parser


# --------------------------------------------------------------------------

def cmd_simulate(cfg: Config, args) -> int:
    scen = cfg.scenario
    if args.periods is not None:
        if args.periods < 1:
            raise ConfigError("--periods must be >= 1")
        scen = replace(scen, num_sweep_periods=args.periods)
    out = args.out_dir / "dwells"
    n = 0
    for dw in iter_dwells(scen):
        write_dwell(out, dw)
        n += 1
    truth = {"scenario": scenario_to_dict(scen)}
    if scen.blocker is not None:
        hit, t = ground_truth_blockage(scen.blocker, scen.radio.tx_rx_distance_m)
        truth.update(blocks=hit, crossing_time_s=t)
    (args.out_dir / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    log.info("wrote %d dwells to %s", n, out)
    return EXIT_OK


def cmd_detect(cfg: Config, args) -> int:
    src = args.dwells or args.out_dir / "dwells"
    dwells = read_dwell_dir(src)
    if not dwells:
        raise RuntimeError(f"no dwell headers found in {src}")
    clutter = cfg.clutter
    if args.clutter_bins is not None:
        clutter = replace(clutter, num_delay_bins=args.clutter_bins)
    if args.clutter_eps is not None:
        clutter = replace(clutter, regularization_epsilon=args.clutter_eps)
    try:
        clutter = ClutterConfig(clutter.num_delay_bins, clutter.regularization_epsilon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fm, spectro = detect_dwells(dwells, cfg.scenario.beams, clutter, cfg.detector)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    first = fm.features[0].period_index
    for m, s in spectro.items():
        write_spectrogram_csv(args.out_dir / f"spectrogram_beam{m}.csv", s,
                              cfg.detector.grid, first)
    write_feature_csv(args.out_dir / "features.csv", fm)
    if args.plot:
        _plot_spectrograms(args.out_dir, spectro, cfg, first)
    log.info("%d of %d periods detected", sum(f.detected for f in fm.features), len(fm.features))
    return EXIT_OK


def _plot_spectrograms(out_dir: Path, spectro, cfg: Config, first: int) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    grid = cfg.detector.grid.values
    td = cfg.scenario.radio.sweep_period_s
    fig, axes = plt.subplots(1, len(spectro), figsize=(3 * len(spectro), 3.2), sharey=True)
    for ax, (m, s) in zip(list(axes) if len(spectro) > 1 else [axes], spectro.items()):
        t0, t1 = (first - 1) * td, (first - 1 + len(s)) * td
        ax.imshow(s, aspect="auto", origin="lower", extent=(grid[0], grid[-1], t0, t1))
        ax.set_title(f"beam {m}")
        ax.set_xlabel("Doppler (Hz)")
    (list(axes) if len(spectro) > 1 else [axes])[0].set_ylabel("time (s)")
    fig.tight_layout()
    fig.savefig(out_dir / "spectrograms.png", dpi=110)
    plt.close(fig)


def cmd_estimate(cfg: Config, args) -> int:
    path = args.features or args.out_dir / "features.csv"
    fm = read_feature_csv(path, cfg.scenario.beams.surveillance_boresights_deg)
    if args.periods is not None:
        if not 1 <= args.periods <= len(fm.features):
            raise ConfigError(f"--periods must lie in [1, {len(fm.features)}]")
        fm = fm.head(args.periods)
    radio = cfg.scenario.radio
    est = cfg.estimator
    try:
        grid = est.grid_for(radio.tx_rx_distance_m)
        kw = {}
        for flag, attr in (("grid_x1", "x1"), ("grid_y1", "y1"), ("grid_v", "v")):
            if getattr(args, flag) is not None:
                kw[attr] = getattr(args, flag)
        if args.grid_theta is not None:
            kw["theta"] = tuple(math.radians(x) for x in args.grid_theta)
        if args.tie_tolerance is not None:
            kw["tie_tolerance"] = args.tie_tolerance
        grid = replace(grid, **kw)
        weights = MatchWeights(
            est.weights.w_doppler if args.w_doppler is None else args.w_doppler,
            est.weights.w_aoa if args.w_aoa is None else args.w_aoa)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    est = replace(est, grid=grid, weights=weights)
    if args.indicator:
        est = replace(est, indicator=args.indicator)
    if args.angle_convention:
        est = replace(est, angle_convention=args.angle_convention)
    if args.grid_only:
        est = replace(est, refine_seeds=0)
    if args.threshold is not None:
        if not 0.0 <= args.threshold <= 1.0:
            raise ConfigError("--threshold must lie in [0, 1]")
        est = replace(est, decision_threshold=args.threshold)
    pred = predict_from_features(fm, radio.tx_rx_distance_m, radio.carrier_frequency_hz, est)
    if pred is None:
        doc = {"outcome": "no-detection", "blocks": False,
               "num_detections": sum(f.detected for f in fm.features)}
    else:
        doc = pred.to_json()
    text = json.dumps(doc, indent=2) + "\n"
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "prediction.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(cfg: Config, args) -> int:
    spec = cfg.experiment
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        spec = replace(spec, trial_count=args.trials)

    def progress(rec):
        log.info("trial %d done (blocks=%s)", rec.trial_id, rec.blocks)

    result = run_experiment(spec, threads=max(1, args.threads), progress=progress)
    write_experiment(args.out_dir, result)
    if args.plot:
        plot_experiment(args.out_dir, result)
    for row in result.duration_table:
        print(f"duration {row.key_lo:.1f} s: {row.correct}/{row.total} = {row.accuracy:.3f}")
    for row in result.warning_table:
        print(f"warning ({row.key_lo:.1f}, {row.key_hi:.1f}] s: "
              f"{row.correct}/{row.total} = {row.accuracy:.3f}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "estimate": cmd_estimate,
            "experiment": cmd_experiment}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "config":
        sys.stdout.write(DEFAULT_CONFIG_YAML)
        return EXIT_OK
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
