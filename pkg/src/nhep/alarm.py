"""Normal-cluster calibration and confidence-window alarm generation.

Calibration streams the training-window representations into a fresh
clustering state; the macro-cluster ids present afterwards form the normal
set C. At detection time each incoming window is judged abnormal iff it
joined a dense (potential) cluster outside C - points absorbed by outlier
micro-clusters count as normal, since sparse deviations are noise by
construction. An alarm fires when the abnormal fraction of the last k
verdicts reaches the threshold; the engine then stays quiet until the
score dips below the threshold again (hysteresis).
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .stream_cluster import Assignment, ClusterParams, ClusterState, insert, macro_clusters

__all__ = [
    "NormalClusterSet",
    "ConfidenceState",
    "AlarmEvent",
    "calibrate",
    "observe",
    "reset",
    "write_alarms_csv",
    "read_alarms_csv",
]


@dataclass(frozen=True)
class NormalClusterSet:
    """Macro-cluster ids considered normal, frozen after calibration."""

    ids: frozenset[int]
    train_count: int
    calibrated_at: float  # stream time of the last training insert

    def to_dict(self) -> dict:
        return {
            "ids": sorted(self.ids),
            "train_count": self.train_count,
            "calibrated_at": self.calibrated_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalClusterSet":
        return cls(
            ids=frozenset(int(i) for i in d["ids"]),
            train_count=int(d["train_count"]),
            calibrated_at=float(d["calibrated_at"]),
        )


@dataclass(frozen=True)
class AlarmEvent:
    time: float  # end time of the triggering window
    score: float  # abnormal fraction in the buffer at emission
    window_id: int | None


@dataclass
class ConfidenceState:
    """Ring buffer of the last k verdicts plus alarm hysteresis."""

    k: int
    threshold: float = 0.5
    buffer: deque = field(default_factory=deque)
    abnormal: int = 0
    armed: bool = True
    last_score: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not (0 < self.threshold <= 1):
            raise ValueError("threshold must be in (0, 1]")


def calibrate(
    representations: np.ndarray,
    cluster_params: ClusterParams,
    times: np.ndarray | None = None,
) -> tuple[ClusterState, NormalClusterSet]:
    """Cluster all training representations and freeze the normal set C.

    ``times`` default to 0, 1, 2, ... Raises when no dense region forms.
    Both the final clustering state and C are returned so detection can
    continue clustering online from where calibration stopped.
    """
    reps = np.asarray(representations, dtype=float)
    if reps.ndim != 2:
        raise ValueError("representations must be (n, d)")
    n = reps.shape[0]
    if times is None:
        times = np.arange(n, dtype=float)
    times = np.asarray(times, dtype=float)

    state = ClusterState(params=cluster_params)
    last_assignment: Assignment | None = None
    for row, t in zip(reps, times):
        last_assignment = insert(state, row, float(t), window_id=None)

    ids = frozenset(macro_clusters(state).values())
    if not ids:
        raise ValueError("calibration failed: no dense normal region")
    calibrated_at = last_assignment.stream_time if last_assignment else 0.0
    return state, NormalClusterSet(ids=ids, train_count=n, calibrated_at=calibrated_at)


def observe(
    state: ConfidenceState, assignment: Assignment, normal: NormalClusterSet
) -> AlarmEvent | None:
    """Push one window verdict; return an alarm if the score crosses the
    threshold while armed.

    Verdict rule: abnormal iff the window joined a dense cluster whose
    macro id is outside C. During warm-up the score divides by the number
    of verdicts seen so far rather than k.
    """
    abnormal = assignment.macro_id is not None and assignment.macro_id not in normal.ids

    if len(state.buffer) == state.k:
        state.abnormal -= state.buffer.popleft()
    state.buffer.append(1 if abnormal else 0)
    state.abnormal += 1 if abnormal else 0

    score = state.abnormal / len(state.buffer)
    state.last_score = score

    event = None
    if score >= state.threshold:
        if state.armed:
            event = AlarmEvent(
                time=assignment.stream_time, score=score, window_id=assignment.window_id
            )
            state.armed = False
    else:
        state.armed = True
    return event


def reset(state: ConfidenceState) -> ConfidenceState:
    """Clear the buffer and re-arm (used at evaluation-segment boundaries)."""
    state.buffer.clear()
    state.abnormal = 0
    state.armed = True
    state.last_score = 0.0
    return state


def write_alarms_csv(alarms: list[AlarmEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_sec", "score", "window_id"])
        for a in alarms:
            w.writerow([f"{a.time:.6f}", f"{a.score:.6f}", "" if a.window_id is None else a.window_id])


def read_alarms_csv(path) -> list[AlarmEvent]:
    from .errors import DataError

    alarms = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time_sec", "score", "window_id"]:
            raise DataError(f"{path}: expected header 'time_sec,score,window_id'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                alarms.append(
                    AlarmEvent(
                        time=float(row[0]),
                        score=float(row[1]),
                        window_id=None if row[2] == "" else int(row[2]),
                    )
                )
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    return alarms
