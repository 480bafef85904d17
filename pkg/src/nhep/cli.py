"""Command-line entry point.

Subcommands: synth, train, detect, eval, sweep, plot. Settings come from
built-in defaults, overridden by ``--config FILE`` (flat key = value
lines), overridden by individual flags. Exit codes: 0 success, 2 config
error, 3 data error, 4 incompatible artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .alarm import read_alarms_csv, write_alarms_csv
from .config import PipelineConfig, config_hash, load_config_file
from .errors import ArtifactMismatchError, ConfigError, DataError
from .evaluate import (
    evaluate_run,
    label_timeline,
    rerun_alarm_engine,
    write_labeled_scores_csv,
    write_report_json,
)
from .signal_prep import (
    detect_r_peaks,
    read_beats_csv,
    read_ecg_csv,
    read_events_csv,
    derive_bradycardia_onsets,
    write_beats_csv,
    write_events_csv,
)
from .stream_cluster import write_snapshot_csv
from .svgplot import sweep_svg, timeline_svg
from .synth import generate, write_drift_csv


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--window-len", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--d-hidden", type=int)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--force", action="store_true", help="skip artifact hash checks")


_FLAG_FIELDS = ("seed", "k", "eps", "mu", "lam", "window_len", "stride", "d_hidden")


def _build_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = load_config_file(args.config, cfg)
    overrides = {
        name: getattr(args, name)
        for name in _FLAG_FIELDS
        if getattr(args, name, None) is not None
    }
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg.validate()


def _load_beats(args):
    if getattr(args, "rr", None):
        return read_beats_csv(args.rr)
    if getattr(args, "ecg", None):
        return detect_r_peaks(read_ecg_csv(args.ecg))
    raise ConfigError("provide --rr or --ecg input")


def _load_onsets(args, beats, cfg: PipelineConfig) -> np.ndarray:
    if getattr(args, "events", None):
        return read_events_csv(args.events)
    return derive_bradycardia_onsets(beats, cfg.hr_threshold, cfg.min_beats)


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    cfg = _build_config(args)
    out = _out(args)
    result = generate(cfg.synth_spec())
    write_beats_csv(result.beats, out / "rr.csv")
    write_events_csv(result.onsets, out / "events.csv")
    write_drift_csv(result.drift_intervals, cfg.synth_spec().drift_type, out / "drift.csv")
    print(
        f"synth: {result.beats.n_beats} beats, {result.onsets.size} events -> {out}/rr.csv"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _build_config(args)
    beats = _load_beats(args)
    onsets = _load_onsets(args, beats, cfg)
    artifacts, result = pl.train_pipeline(beats, onsets, cfg)
    out = _out(args)
    pl.save_artifacts(artifacts, out)
    with open(out / "train_summary.json", "w") as fh:
        json.dump(
            {
                "config_hash": artifacts.config_hash,
                "train_windows": artifacts.train_windows,
                "train_boundary_sec": artifacts.train_boundary,
                "normal_clusters": sorted(artifacts.normal.ids),
                "first_epoch_loss": result.epoch_losses[0],
                "final_epoch_loss": result.epoch_losses[-1],
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    print(
        f"train: {artifacts.train_windows} windows, loss "
        f"{result.epoch_losses[0]:.4f} -> {result.epoch_losses[-1]:.4f}, "
        f"|C| = {len(artifacts.normal.ids)}"
    )
    return 0


def cmd_detect(args) -> int:
    cfg = _build_config(args)
    beats = _load_beats(args)
    artifacts = pl.load_artifacts(args.artifacts, expected_hash=config_hash(cfg), force=args.force)
    result = pl.detect_pipeline(beats, artifacts, cfg)
    out = _out(args)
    write_alarms_csv(result.alarms, out / "alarms.csv")
    pl.write_scores_csv(result, out / "scores.csv")
    write_snapshot_csv(result.cluster_state, out / "clusters.csv")
    with open(out / "run_manifest.json", "w") as fh:
        json.dump({"config_hash": artifacts.config_hash, "windows": int(result.window_times.size)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"detect: {result.window_times.size} windows, {len(result.alarms)} alarms -> {out}")
    return 0


def _check_run_manifest(scores_path: str, cfg: PipelineConfig, force: bool) -> None:
    manifest = Path(scores_path).parent / "run_manifest.json"
    if not manifest.exists() or force:
        return
    with open(manifest) as fh:
        stored = json.load(fh).get("config_hash", "")
    current = config_hash(cfg)
    if stored != current:
        raise ArtifactMismatchError(
            f"detection logs were produced under a different configuration "
            f"(stored {stored[:12]}..., current {current[:12]}...); use --force to override"
        )


def cmd_eval(args) -> int:
    cfg = _build_config(args)
    _check_run_manifest(args.scores, cfg, args.force)
    times, _, scores, _ = pl.read_scores_csv(args.scores)
    alarms = read_alarms_csv(args.alarms)
    onsets = read_events_csv(args.events)
    report = evaluate_run(times, scores, alarms, onsets, cfg.eval_config())
    out = _out(args)
    write_report_json(report, out / "report.json")
    labels = label_timeline(times, onsets, cfg.eval_config())
    write_labeled_scores_csv(times, scores, labels, out / "labeled_scores.csv")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(
        "eval: recall={r} specificity={s} auc={a} mean_lead_min={m}".format(
            r="n/a" if report.recall is None else f"{report.recall:.3f}",
            s="n/a" if report.specificity is None else f"{report.specificity:.3f}",
            a="n/a" if report.auc is None else f"{report.auc:.3f}",
            m="n/a" if report.mean_lead_min is None else f"{report.mean_lead_min:.2f}",
        )
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    try:
        k_values = [int(s) for s in args.k_list.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--k-list must be comma-separated integers, got {args.k_list!r}")
    if not k_values:
        raise ConfigError("--k-list is empty")
    beats = _load_beats(args)
    onsets = read_events_csv(args.events)
    artifacts = pl.load_artifacts(args.artifacts, expected_hash=config_hash(cfg), force=args.force)
    result = pl.detect_pipeline(beats, artifacts, cfg)

    out = _out(args)
    rows = []
    series = {"recall": [], "specificity": [], "auc": [], "mean_lead_min": []}
    for k in k_values:
        scores, alarms = rerun_alarm_engine(result.assignments, artifacts.normal, k, cfg.threshold)
        report = evaluate_run(result.window_times, scores, alarms, onsets, cfg.eval_config())
        write_report_json(report, out / f"report_k{k}.json")
        rows.append(report)
        for name in series:
            series[name].append(getattr(report, name))

    with open(out / "sweep.csv", "w") as fh:
        fh.write("k,recall,specificity,auc,mean_lead_min\n")
        for k, rep in zip(k_values, rows):
            vals = [rep.recall, rep.specificity, rep.auc, rep.mean_lead_min]
            fh.write(",".join([str(k)] + ["" if v is None else f"{v:.6f}" for v in vals]) + "\n")
    sweep_svg(k_values, series, out / "sweep.svg")
    print(f"sweep: {len(k_values)} settings -> {out}/sweep.csv")
    return 0


def cmd_plot(args) -> int:
    cfg = _build_config(args)
    times, _, _, macros = pl.read_scores_csv(args.scores)
    onsets = read_events_csv(args.events) if args.events else np.empty(0)
    out = _out(args)
    timeline_svg(times, macros, onsets, cfg.pre_event_span, out / "timeline.svg")
    print(f"plot: {times.size} windows -> {out}/timeline.svg")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nhep",
        description="Unsupervised early-warning pipeline for negative events in physiological time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic RR recording with injected events")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the auto-encoder and calibrate normal clusters")
    _add_common(p)
    p.add_argument("--rr", help="beat timestamps CSV (beat_time_sec)")
    p.add_argument("--ecg", help="raw ECG CSV (t_sec,mv)")
    p.add_argument("--events", help="event onsets CSV (onset_sec); derived from the data if omitted")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="stream the test span through the detector")
    _add_common(p)
    p.add_argument("--rr")
    p.add_argument("--ecg")
    p.add_argument("--artifacts", required=True, help="directory written by 'train'")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score a detection run against event onsets")
    _add_common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--alarms", required=True)
    p.add_argument("--events", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="re-run the alarm engine across confidence window sizes")
    _add_common(p)
    p.add_argument("--rr")
    p.add_argument("--ecg")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--k-list", default="1,2,3,4,5,6,7,8")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render the cluster-membership timeline SVG")
    _add_common(p)
    p.add_argument("--scores", required=True, help="per-window scores CSV from 'detect'")
    p.add_argument("--events")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ArtifactMismatchError as exc:
        print(f"incompatible artifacts: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
