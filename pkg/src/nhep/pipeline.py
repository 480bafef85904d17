"""End-to-end orchestration: train, persist, stream-detect, evaluate.

Training sees only the first ``train_fraction`` of the recording (the beat
series is cropped before any transform, so no information leaks across the
boundary), drops windows intersecting the pre/post margins around any
event onset, fits the scaler, trains the auto-encoder and calibrates the
normal cluster set. Detection recomputes features over the full recording,
streams the post-boundary windows through encode -> normalize -> cluster
-> confidence window, and keeps clustering online from the calibrated
state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import alarm as alarm_mod
from . import autoencoder as ae
from . import stream_cluster as sc
from .alarm import AlarmEvent, NormalClusterSet
from .config import PipelineConfig, config_hash
from .errors import ArtifactMismatchError, DataError
from .evaluate import EvalReport, evaluate_run
from .signal_prep import (
    BeatSeries,
    FeatureScaler,
    FeatureWindow,
    apply_scaler,
    clean_rr,
    fit_scaler,
    morlet_cwt,
    segment_windows,
)
from .stream_cluster import Assignment, ClusterState, MicroCluster

__all__ = [
    "Artifacts",
    "DetectResult",
    "build_windows",
    "train_pipeline",
    "detect_pipeline",
    "save_artifacts",
    "load_artifacts",
    "write_scores_csv",
    "read_scores_csv",
]


@dataclass
class Artifacts:
    params: ae.ModelParams
    scaler: FeatureScaler
    cluster_state: ClusterState
    normal: NormalClusterSet
    train_boundary: float
    config_hash: str
    train_windows: int


@dataclass
class DetectResult:
    window_times: np.ndarray
    window_ids: np.ndarray
    scores: np.ndarray
    assignments: list[Assignment]
    alarms: list[AlarmEvent]
    cluster_state: ClusterState


def build_windows(beats: BeatSeries, cfg: PipelineConfig) -> list[FeatureWindow]:
    """Artifact-clipped CWT features plus segmentation; the window grid
    always starts at beat 0."""
    feats = morlet_cwt(beats, cfg.cwt_config(), rr_values=clean_rr(beats))
    return segment_windows(feats, beats.beat_times, cfg.window_len, cfg.stride)


def _window_intersects_margin(
    w: FeatureWindow, beat_times: np.ndarray, onsets: np.ndarray, pre: float, post: float
) -> bool:
    w_start = float(beat_times[w.beat_start])
    w_end = w.end_time
    for o in onsets:
        if w_start <= o + post and o - pre <= w_end:
            return True
    return False


def train_pipeline(
    beats: BeatSeries, onsets, cfg: PipelineConfig
) -> tuple[Artifacts, ae.TrainResult]:
    """Train on the leading fraction of the recording, away from events."""
    onsets = np.sort(np.asarray(onsets, dtype=float))
    t0 = float(beats.beat_times[0])
    t_end = float(beats.beat_times[-1])
    boundary = t0 + (t_end - t0) * cfg.train_fraction

    train_beats = beats.crop(boundary)
    if train_beats.n_beats < cfg.window_len:
        raise DataError("empty training set")
    windows = build_windows(train_beats, cfg)
    ecfg = cfg.eval_config()
    kept = [
        w
        for w in windows
        if not _window_intersects_margin(
            w, train_beats.beat_times, onsets, ecfg.pre_event_span, ecfg.post_event_exclusion
        )
    ]
    if not kept:
        raise DataError("empty training set")

    scaler = fit_scaler(kept)
    scaled = [apply_scaler(scaler, w) for w in kept]
    result = ae.train(scaled, cfg.train_config(), d_hidden=cfg.d_hidden)

    X = np.stack([w.features for w in scaled])
    reps = ae.normalize_rows(ae.encode_batch(X, result.params))
    times = np.array([w.end_time for w in scaled])
    state, normal = alarm_mod.calibrate(reps, cfg.cluster_params(), times=times)

    artifacts = Artifacts(
        params=result.params,
        scaler=scaler,
        cluster_state=state,
        normal=normal,
        train_boundary=boundary,
        config_hash=config_hash(cfg),
        train_windows=len(kept),
    )
    return artifacts, result


def detect_pipeline(beats: BeatSeries, artifacts: Artifacts, cfg: PipelineConfig) -> DetectResult:
    """Stream all windows past the training boundary through the detector.

    Mutates ``artifacts.cluster_state`` (clustering continues online).
    """
    windows = build_windows(beats, cfg)
    test = [w for w in windows if w.end_time > artifacts.train_boundary]
    state = artifacts.cluster_state
    conf = cfg.confidence_state()
    alarm_mod.reset(conf)

    if not test:
        return DetectResult(
            window_times=np.empty(0),
            window_ids=np.empty(0, dtype=int),
            scores=np.empty(0),
            assignments=[],
            alarms=[],
            cluster_state=state,
        )

    scaled = [apply_scaler(artifacts.scaler, w) for w in test]
    X = np.stack([w.features for w in scaled])
    reps = ae.normalize_rows(ae.encode_batch(X, artifacts.params))

    assignments: list[Assignment] = []
    alarms: list[AlarmEvent] = []
    scores = np.empty(len(test))
    for i, (w, r) in enumerate(zip(test, reps)):
        a = sc.insert(state, r, w.end_time, window_id=w.window_id)
        assignments.append(a)
        event = alarm_mod.observe(conf, a, artifacts.normal)
        scores[i] = conf.last_score
        if event is not None:
            alarms.append(event)

    return DetectResult(
        window_times=np.array([w.end_time for w in test]),
        window_ids=np.array([w.window_id for w in test], dtype=int),
        scores=scores,
        assignments=assignments,
        alarms=alarms,
        cluster_state=state,
    )


def evaluate_detection(result: DetectResult, onsets, cfg: PipelineConfig) -> EvalReport:
    return evaluate_run(result.window_times, result.scores, result.alarms, onsets, cfg.eval_config())


# ---------------------------------------------------------------------------
# Artifact persistence
# ---------------------------------------------------------------------------

MODEL_FILE = "model.bin"
SCALER_FILE = "scaler.json"
CLUSTERS_FILE = "clusters.json"
MANIFEST_FILE = "manifest.json"


def _dump_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_artifacts(artifacts: Artifacts, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ae.save_model(artifacts.params, out / MODEL_FILE)
    _dump_json(artifacts.scaler.to_dict(), out / SCALER_FILE)

    state = artifacts.cluster_state
    clusters = {
        "params": {
            "eps": state.params.eps,
            "mu": state.params.mu,
            "lambda": state.params.lam,
            "beta": state.params.beta,
        },
        "next_id": state.next_id,
        "t_decayed": None if math.isinf(state.t_decayed) else state.t_decayed,
        "t_last_insert": None if math.isinf(state.t_last_insert) else state.t_last_insert,
        "normal": artifacts.normal.to_dict(),
        "micro": [
            {
                "id": m.id,
                "kind": m.kind,
                "w": m.w,
                "ls": m.ls.tolist(),
                "ss": m.ss,
                "t_create": m.t_create,
                "t_last": m.t_last,
            }
            for m in state.micro
        ],
    }
    _dump_json(clusters, out / CLUSTERS_FILE)
    _dump_json(
        {
            "config_hash": artifacts.config_hash,
            "train_boundary": artifacts.train_boundary,
            "train_windows": artifacts.train_windows,
            "files": [MODEL_FILE, SCALER_FILE, CLUSTERS_FILE],
        },
        out / MANIFEST_FILE,
    )


def load_artifacts(in_dir, expected_hash: str | None = None, force: bool = False) -> Artifacts:
    src = Path(in_dir)
    try:
        with open(src / MANIFEST_FILE) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read artifacts: {exc}") from None

    stored_hash = manifest.get("config_hash", "")
    if expected_hash is not None and stored_hash != expected_hash and not force:
        raise ArtifactMismatchError(
            "artifacts were produced under a different configuration "
            f"(stored {stored_hash[:12]}..., current {expected_hash[:12]}...); use --force to override"
        )

    params = ae.load_model(src / MODEL_FILE)
    with open(src / SCALER_FILE) as fh:
        scaler = FeatureScaler.from_dict(json.load(fh))
    with open(src / CLUSTERS_FILE) as fh:
        blob = json.load(fh)

    cp = sc.ClusterParams(
        eps=blob["params"]["eps"],
        mu=blob["params"]["mu"],
        lam=blob["params"]["lambda"],
        beta=blob["params"]["beta"],
    )
    state = ClusterState(params=cp)
    state.next_id = int(blob["next_id"])
    state.t_decayed = -math.inf if blob["t_decayed"] is None else float(blob["t_decayed"])
    state.t_last_insert = (
        -math.inf if blob["t_last_insert"] is None else float(blob["t_last_insert"])
    )
    state.micro = [
        MicroCluster(
            id=int(m["id"]),
            kind=m["kind"],
            w=float(m["w"]),
            ls=np.asarray(m["ls"], dtype=float),
            ss=float(m["ss"]),
            t_create=float(m["t_create"]),
            t_last=float(m["t_last"]),
        )
        for m in blob["micro"]
    ]
    normal = NormalClusterSet.from_dict(blob["normal"])
    return Artifacts(
        params=params,
        scaler=scaler,
        cluster_state=state,
        normal=normal,
        train_boundary=float(manifest["train_boundary"]),
        config_hash=stored_hash,
        train_windows=int(manifest.get("train_windows", 0)),
    )


# ---------------------------------------------------------------------------
# Per-window detection log
# ---------------------------------------------------------------------------


def write_scores_csv(result: DetectResult, path) -> None:
    """Header ``time_sec,window_id,score,macro_id``; outliers get macro -1."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_sec", "window_id", "score", "macro_id"])
        for t, wid, s, a in zip(
            result.window_times, result.window_ids, result.scores, result.assignments
        ):
            macro = -1 if a.macro_id is None else a.macro_id
            w.writerow([f"{t:.6f}", int(wid), f"{s:.6f}", macro])


def read_scores_csv(path):
    """Returns (times, window_ids, scores, macro_ids) arrays; macro -1 = outlier."""
    import csv

    times, wids, scores, macros = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "time_sec",
            "window_id",
            "score",
            "macro_id",
        ]:
            raise DataError(f"{path}: expected header 'time_sec,window_id,score,macro_id'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                times.append(float(row[0]))
                wids.append(int(row[1]))
                scores.append(float(row[2]))
                macros.append(int(row[3]))
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    return (
        np.asarray(times),
        np.asarray(wids, dtype=int),
        np.asarray(scores),
        np.asarray(macros, dtype=int),
    )
