"""Evaluation protocol: timeline labeling, recall/specificity/AUC/lead time.

Decision points are window end times. Each point is labeled positive
(inside the pre-event span before an onset), excluded (inside the
post-onset exclusion) or negative; where the regions of consecutive events
overlap, positivity of the upcoming event wins over the previous event's
exclusion, and exclusion wins over negative.

Recall counts events with at least one true-positive alarm; specificity
counts alarm-free maximal negative regions; AUC is the rank-based
(Mann-Whitney) statistic over per-window confidence scores with ties
scored 0.5. Alarms inside excluded regions are ignored entirely.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .alarm import AlarmEvent, ConfidenceState, NormalClusterSet, observe, reset
from .autoencoder import ModelParams, reconstruction_errors
from .stream_cluster import Assignment

__all__ = [
    "EvalConfig",
    "EvalReport",
    "NEGATIVE",
    "POSITIVE",
    "EXCLUDED",
    "LABEL_NAMES",
    "label_timeline",
    "score_events",
    "score_negatives",
    "compute_auc",
    "evaluate_run",
    "rerun_alarm_engine",
    "sweep_confidence_window",
    "baseline_recon_eval",
    "write_report_json",
    "read_report_json",
    "write_labeled_scores_csv",
]

NEGATIVE, POSITIVE, EXCLUDED = 0, 1, 2
LABEL_NAMES = {NEGATIVE: "negative", POSITIVE: "positive", EXCLUDED: "excluded"}


@dataclass(frozen=True)
class EvalConfig:
    pre_event_span: float = 180.0  # seconds before onset counted positive
    post_event_exclusion: float = 360.0  # seconds after onset dropped
    train_fraction: float = 1.0 / 3.0

    def __post_init__(self):
        if self.pre_event_span <= 0 or self.post_event_exclusion <= 0:
            raise ValueError("spans must be positive")
        if not (0 < self.train_fraction < 1):
            raise ValueError("train_fraction must be in (0, 1)")


@dataclass
class EvalReport:
    recall: float | None
    specificity: float | None
    auc: float | None
    mean_lead_min: float | None
    per_event_leads: list[float | None]
    counts: dict
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "recall": self.recall,
            "specificity": self.specificity,
            "auc": self.auc,
            "mean_lead_min": self.mean_lead_min,
            "per_event_leads": self.per_event_leads,
            "counts": self.counts,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            recall=d["recall"],
            specificity=d["specificity"],
            auc=d["auc"],
            mean_lead_min=d["mean_lead_min"],
            per_event_leads=d["per_event_leads"],
            counts=d["counts"],
            warnings=d.get("warnings", []),
        )


def label_timeline(window_times, onsets, cfg: EvalConfig) -> np.ndarray:
    """Label each decision point NEGATIVE / POSITIVE / EXCLUDED."""
    times = np.asarray(window_times, dtype=float)
    onsets = np.sort(np.asarray(onsets, dtype=float))
    labels = np.full(times.size, NEGATIVE, dtype=np.int8)
    for o in onsets:
        labels[(times >= o) & (times < o + cfg.post_event_exclusion)] = EXCLUDED
    for o in onsets:
        labels[(times >= o - cfg.pre_event_span) & (times < o)] = POSITIVE
    return labels


def _label_point(t: float, onsets: np.ndarray, cfg: EvalConfig) -> int:
    for o in onsets:
        if o - cfg.pre_event_span <= t < o:
            return POSITIVE
    for o in onsets:
        if o <= t < o + cfg.post_event_exclusion:
            return EXCLUDED
    return NEGATIVE


@dataclass
class EventScore:
    recall: float | None
    per_event_leads: list[float | None]  # minutes; None = missed
    detected: int
    tp_alarms: int


def score_events(alarms: list[AlarmEvent], onsets, cfg: EvalConfig) -> EventScore:
    """True-positive mapping and per-event lead times.

    An alarm is a true positive iff some onset lies in
    (alarm_time, alarm_time + pre_event_span]; it maps to the earliest such
    onset only. Lead time of a detected event is onset minus its earliest
    true-positive alarm, in minutes. Alarms in excluded regions are
    dropped first.
    """
    onsets = np.sort(np.asarray(onsets, dtype=float))
    if onsets.size == 0:
        return EventScore(recall=None, per_event_leads=[], detected=0, tp_alarms=0)
    earliest_tp = [None] * onsets.size
    tp_alarms = 0
    for a in alarms:
        if _label_point(a.time, onsets, cfg) == EXCLUDED:
            continue
        idx = np.searchsorted(onsets, a.time, side="right")
        if idx < onsets.size and onsets[idx] <= a.time + cfg.pre_event_span:
            tp_alarms += 1
            if earliest_tp[idx] is None or a.time < earliest_tp[idx]:
                earliest_tp[idx] = a.time
    leads = [
        None if t is None else (onsets[i] - t) / 60.0 for i, t in enumerate(earliest_tp)
    ]
    detected = sum(1 for t in earliest_tp if t is not None)
    return EventScore(
        recall=detected / onsets.size,
        per_event_leads=leads,
        detected=detected,
        tp_alarms=tp_alarms,
    )


@dataclass
class NegativeScore:
    specificity: float | None
    tn_regions: int
    n_regions: int
    fp_alarms: int
    warning: str | None = None


def score_negatives(
    alarms: list[AlarmEvent], window_times, onsets, cfg: EvalConfig
) -> NegativeScore:
    """Per-interval true negatives.

    Each maximal negative span between consecutive events (and before the
    first / after the last, clipped to the observed timeline) is one
    negative instance; it is a true negative iff no alarm fires inside it.
    Alarms inside excluded regions never void an instance.
    """
    times = np.asarray(window_times, dtype=float)
    onsets = np.sort(np.asarray(onsets, dtype=float))
    if times.size == 0:
        return NegativeScore(None, 0, 0, 0, warning="no negative regions")
    t0, t1 = float(times.min()), float(times.max())

    bounds = []
    prev_end = t0
    for o in onsets:
        bounds.append((prev_end, o - cfg.pre_event_span))
        prev_end = o + cfg.post_event_exclusion
    bounds.append((prev_end, np.nextafter(t1, np.inf)))

    regions = [(max(s, t0), min(e, np.nextafter(t1, np.inf))) for s, e in bounds]
    regions = [(s, e) for s, e in regions if s < e]
    if not regions:
        return NegativeScore(None, 0, 0, 0, warning="no negative regions")

    alarm_times = np.array(
        [a.time for a in alarms if _label_point(a.time, onsets, cfg) == NEGATIVE]
    )
    tn = 0
    for s, e in regions:
        if not np.any((alarm_times >= s) & (alarm_times < e)):
            tn += 1
    return NegativeScore(
        specificity=tn / len(regions),
        tn_regions=tn,
        n_regions=len(regions),
        fp_alarms=int(alarm_times.size),
    )


def compute_auc(scores, labels) -> float:
    """Rank-based AUC of POSITIVE vs NEGATIVE scores; ties count 0.5.

    EXCLUDED points are dropped. Raises when either class is empty.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == POSITIVE]
    neg = scores[labels == NEGATIVE]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC undefined")

    merged = np.concatenate([neg, pos])
    order = np.argsort(merged, kind="stable")
    ranks = np.empty(merged.size, dtype=float)
    sorted_vals = merged[order]
    i = 0
    while i < merged.size:
        j = i
        while j + 1 < merged.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[neg.size :]))
    u = rank_sum_pos - pos.size * (pos.size + 1) / 2.0
    return u / (pos.size * neg.size)


def evaluate_run(
    window_times, scores, alarms: list[AlarmEvent], onsets, cfg: EvalConfig
) -> EvalReport:
    """Full report for one detection run."""
    window_times = np.asarray(window_times, dtype=float)
    scores = np.asarray(scores, dtype=float)
    onsets = np.sort(np.asarray(onsets, dtype=float))
    labels = label_timeline(window_times, onsets, cfg)

    ev = score_events(alarms, onsets, cfg)
    neg = score_negatives(alarms, window_times, onsets, cfg)

    warnings = []
    if neg.warning:
        warnings.append(neg.warning)
    try:
        auc = compute_auc(scores, labels)
    except ValueError:
        auc = None
        warnings.append("AUC undefined: single-class timeline")

    valid_leads = [x for x in ev.per_event_leads if x is not None]
    mean_lead = float(np.mean(valid_leads)) if valid_leads else None
    counts = {
        "events": int(onsets.size),
        "detected_events": ev.detected,
        "missed_events": int(onsets.size) - ev.detected,
        "tp_alarms": ev.tp_alarms,
        "fp_alarms": neg.fp_alarms,
        "tn_regions": neg.tn_regions,
        "negative_regions": neg.n_regions,
        "windows": int(window_times.size),
        "positive_windows": int(np.sum(labels == POSITIVE)),
        "negative_windows": int(np.sum(labels == NEGATIVE)),
        "excluded_windows": int(np.sum(labels == EXCLUDED)),
    }
    return EvalReport(
        recall=ev.recall,
        specificity=neg.specificity,
        auc=auc,
        mean_lead_min=mean_lead,
        per_event_leads=ev.per_event_leads,
        counts=counts,
        warnings=warnings,
    )


def rerun_alarm_engine(
    assignments: list[Assignment], normal: NormalClusterSet, k: int, threshold: float = 0.5
) -> tuple[np.ndarray, list[AlarmEvent]]:
    """Replay cached assignments through a fresh confidence window."""
    state = ConfidenceState(k=k, threshold=threshold)
    reset(state)
    scores = np.empty(len(assignments))
    alarms: list[AlarmEvent] = []
    for i, a in enumerate(assignments):
        event = observe(state, a, normal)
        scores[i] = state.last_score
        if event is not None:
            alarms.append(event)
    return scores, alarms


def sweep_confidence_window(
    assignments: list[Assignment],
    normal: NormalClusterSet,
    k_values,
    onsets,
    cfg: EvalConfig,
    threshold: float = 0.5,
) -> dict[int, EvalReport]:
    """Re-run only the alarm engine for each k over cached assignments."""
    window_times = np.array([a.stream_time for a in assignments])
    out: dict[int, EvalReport] = {}
    for k in k_values:
        scores, alarms = rerun_alarm_engine(assignments, normal, int(k), threshold)
        out[int(k)] = evaluate_run(window_times, scores, alarms, onsets, cfg)
    return out


def baseline_recon_eval(
    windows,
    params: ModelParams,
    onsets,
    cfg: EvalConfig,
    alarm_threshold: float | None = None,
) -> EvalReport:
    """Reconstruction-error baseline under the same labeling protocol.

    The per-window score is the mean squared reconstruction error. AUC is
    threshold-free; recall/specificity are only reported when an explicit
    ``alarm_threshold`` is given (e.g. a quantile of training errors), in
    which case every window at or above it counts as an alarm.
    """
    window_times = np.array([w.end_time for w in windows])
    X = np.stack([np.asarray(w.features, dtype=float) for w in windows])
    scores = reconstruction_errors(X, params)

    alarms: list[AlarmEvent] = []
    if alarm_threshold is not None:
        for w, s in zip(windows, scores):
            if s >= alarm_threshold:
                alarms.append(AlarmEvent(time=w.end_time, score=float(s), window_id=w.window_id))

    report = evaluate_run(window_times, scores, alarms, onsets, cfg)
    if alarm_threshold is None:
        report.recall = None
        report.specificity = None
        report.mean_lead_min = None
        report.per_event_leads = []
        report.warnings.append("no alarm threshold: baseline reports AUC only")
    return report


# ---------------------------------------------------------------------------
# Report and table files
# ---------------------------------------------------------------------------


def write_report_json(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report_json(path) -> EvalReport:
    with open(path) as fh:
        return EvalReport.from_dict(json.load(fh))


def write_labeled_scores_csv(window_times, scores, labels, path) -> None:
    """Per-window (time, score, label) table for plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_sec", "score", "label"])
        for t, s, lab in zip(window_times, scores, labels):
            w.writerow([f"{t:.6f}", f"{s:.6f}", LABEL_NAMES[int(lab)]])
