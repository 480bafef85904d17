"""Online density-based stream clustering of unit-norm representations.

Micro-clusters summarize nearby points by (weight, linear sum, squared-norm
sum) with exponential time decay 2^(-lambda * dt). A micro-cluster is
"potential" once its weight reaches beta * mu, otherwise it is an outlier
buffer entry. Macro-clusters are connected components of potential
micro-clusters whose centers lie within 2 * eps of each other; a macro
cluster is identified by the smallest micro id it contains, which keeps ids
stable as the stream grows.

Single-writer contract: one thread drives insert/prune; readers may call
snapshot/macro_clusters between inserts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ClusterParams",
    "MicroCluster",
    "Assignment",
    "ClusterState",
    "insert",
    "apply_decay",
    "prune",
    "macro_clusters",
    "snapshot",
    "write_snapshot_csv",
    "OUTLIER",
]

# Macro id used in assignments for points absorbed by outlier micro-clusters.
OUTLIER = None

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class ClusterParams:
    eps: float = 0.01  # radius threshold
    mu: float = 2.0  # core weight threshold
    lam: float = 0.0  # decay rate, in 1/stream-time-unit
    beta: float = 1.0  # outlier-to-potential fraction

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.mu < 1:
            raise ValueError("mu must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not (0 < self.beta <= 1):
            raise ValueError("beta must be in (0, 1]")


@dataclass
class MicroCluster:
    id: int
    kind: str  # "potential" | "outlier"
    w: float
    ls: np.ndarray
    ss: float
    t_create: float
    t_last: float

    @property
    def center(self) -> np.ndarray:
        return self.ls / self.w

    @property
    def radius(self) -> float:
        c = self.ls / self.w
        return math.sqrt(max(0.0, self.ss / self.w - float(c @ c)))


@dataclass(frozen=True)
class Assignment:
    window_id: int | None
    macro_id: int | None  # None == OUTLIER
    micro_id: int
    stream_time: float

    @property
    def is_outlier(self) -> bool:
        return self.macro_id is None


@dataclass
class ClusterState:
    params: ClusterParams
    micro: list[MicroCluster] = field(default_factory=list)
    next_id: int = 0
    t_decayed: float = -math.inf  # decay applied up to here
    t_last_insert: float = -math.inf

    def potentials(self) -> list[MicroCluster]:
        return [m for m in self.micro if m.kind == "potential"]

    def outliers(self) -> list[MicroCluster]:
        return [m for m in self.micro if m.kind == "outlier"]


def apply_decay(state: ClusterState, t: float) -> ClusterState:
    """Scale every micro-cluster's (w, ls, ss) by 2^(-lambda * dt)."""
    if t < state.t_decayed:
        raise ValueError("time went backwards")
    if state.params.lam > 0 and state.t_decayed > -math.inf:
        factor = 2.0 ** (-state.params.lam * (t - state.t_decayed))
        for m in state.micro:
            m.w *= factor
            m.ls = m.ls * factor
            m.ss *= factor
    state.t_decayed = t
    return state


def _nearest(point: np.ndarray, clusters: list[MicroCluster]) -> MicroCluster | None:
    best = None
    best_key = None
    for m in clusters:
        d = float(np.linalg.norm(m.center - point))
        key = (d, m.id)  # lowest id wins exact ties
        if best_key is None or key < best_key:
            best, best_key = m, key
    return best


def _merge_radius(m: MicroCluster, point: np.ndarray) -> float:
    w = m.w + 1.0
    ls = m.ls + point
    ss = m.ss + float(point @ point)
    c = ls / w
    return math.sqrt(max(0.0, ss / w - float(c @ c)))


def _absorb(m: MicroCluster, point: np.ndarray, t: float) -> None:
    m.w += 1.0
    m.ls = m.ls + point
    m.ss += float(point @ point)
    m.t_last = t


def insert(
    state: ClusterState, point: np.ndarray, t: float, window_id: int | None = None
) -> Assignment:
    """Stream one unit-norm point at stream time ``t``.

    Tries the nearest potential micro-cluster first, then the nearest
    outlier micro-cluster (merge allowed only if the post-merge radius
    stays within eps), else opens a new outlier micro-cluster. An outlier
    whose weight reaches beta * mu is promoted to potential.
    """
    point = np.asarray(point, dtype=float)
    if abs(np.linalg.norm(point) - 1.0) > UNIT_NORM_TOL:
        raise ValueError("unnormalized point")
    if t < state.t_last_insert:
        raise ValueError("time went backwards")
    apply_decay(state, t)
    state.t_last_insert = t
    p = state.params

    target = None
    nearest_pot = _nearest(point, state.potentials())
    if nearest_pot is not None and _merge_radius(nearest_pot, point) <= p.eps:
        target = nearest_pot
        _absorb(target, point, t)
    else:
        nearest_out = _nearest(point, state.outliers())
        if nearest_out is not None and _merge_radius(nearest_out, point) <= p.eps:
            target = nearest_out
            _absorb(target, point, t)
            if target.w >= p.beta * p.mu:
                target.kind = "potential"
        else:
            target = MicroCluster(
                id=state.next_id,
                kind="potential" if 1.0 >= p.beta * p.mu else "outlier",
                w=1.0,
                ls=point.copy(),
                ss=float(point @ point),
                t_create=t,
                t_last=t,
            )
            state.next_id += 1
            state.micro.append(target)

    if target.kind == "potential":
        macro = macro_clusters(state)[target.id]
    else:
        macro = OUTLIER
    return Assignment(window_id=window_id, macro_id=macro, micro_id=target.id, stream_time=t)


def prune(state: ClusterState, t: float) -> ClusterState:
    """Drop decayed potentials below beta * mu and stale outliers below the
    DenStream lower-weight limit. A no-op when lambda is 0."""
    p = state.params
    if p.lam == 0:
        return state
    apply_decay(state, t)
    keep: list[MicroCluster] = []
    bm = p.beta * p.mu
    t_p = math.ceil(math.log2(bm / (bm - 1.0)) / p.lam) if bm > 1 else None
    for m in state.micro:
        if m.t_last >= t:  # just touched by insert; never pruned
            keep.append(m)
            continue
        if m.kind == "potential":
            if m.w >= bm:
                keep.append(m)
        else:
            if t_p is None:
                keep.append(m)
                continue
            num = 2.0 ** (-p.lam * (t - m.t_create + t_p)) - 1.0
            den = 2.0 ** (-p.lam * t_p) - 1.0
            xi = num / den
            if m.w >= xi:
                keep.append(m)
    state.micro = keep
    return state


def macro_clusters(state: ClusterState) -> dict[int, int]:
    """Map each potential micro id to its macro id (connected components of
    the centers-within-2*eps graph; macro id = smallest member micro id)."""
    pots = state.potentials()
    if not pots:
        return {}
    centers = np.stack([m.center for m in pots])
    n = len(pots)
    d2 = np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    adj = d2 <= (2.0 * state.params.eps) ** 2

    labels = [-1] * n
    comp = 0
    for i in range(n):
        if labels[i] != -1:
            continue
        stack = [i]
        labels[i] = comp
        while stack:
            u = stack.pop()
            for vidx in np.nonzero(adj[u])[0]:
                if labels[vidx] == -1:
                    labels[vidx] = comp
                    stack.append(int(vidx))
        comp += 1

    macro_of_comp: dict[int, int] = {}
    for m, lab in zip(pots, labels):
        macro_of_comp[lab] = min(macro_of_comp.get(lab, m.id), m.id)
    return {m.id: macro_of_comp[lab] for m, lab in zip(pots, labels)}


def snapshot(state: ClusterState) -> list[tuple]:
    """Rows (micro_id, kind, weight, center, radius, macro_id|None)."""
    macro = macro_clusters(state)
    rows = []
    for m in sorted(state.micro, key=lambda m: m.id):
        rows.append((m.id, m.kind, m.w, m.center.copy(), m.radius, macro.get(m.id)))
    return rows


def write_snapshot_csv(state: ClusterState, path) -> None:
    """Export ``micro_id,kind,weight,cx_0..cx_{d-1},radius,macro_id``;
    outlier micro-clusters get macro_id -1."""
    rows = snapshot(state)
    dim = rows[0][3].size if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["micro_id", "kind", "weight"]
            + [f"cx_{i}" for i in range(dim)]
            + ["radius", "macro_id"]
        )
        for mid, kind, weight, center, radius, macro in rows:
            w.writerow(
                [mid, kind, f"{weight:.9g}"]
                + [f"{c:.9g}" for c in center]
                + [f"{radius:.9g}", -1 if macro is None else macro]
            )
