"""Tiny deterministic SVG emitters (no plotting dependency).

Byte-identical output for identical inputs, which the command-layer
reproducibility contract needs. Time is drawn in minutes.
"""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 900, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 30, 34, 50

PALETTE = [
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
]


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _axes(title: str, xlabel: str, ylabel: str) -> list[str]:
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    x1, y1 = WIDTH - MARGIN_R, MARGIN_T
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="18" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {(y0 + y1) / 2:.1f})">{ylabel}</text>',
    ]


def _xmap(t, t_min, t_max):
    span = max(t_max - t_min, 1e-12)
    return MARGIN_L + (t - t_min) / span * (WIDTH - MARGIN_L - MARGIN_R)


def timeline_svg(times, macro_ids, onsets, pre_event_span: float, path) -> None:
    """Cluster-membership timeline.

    One y-level per distinct macro id (outliers on a reserved bottom
    level); circles normally, crosses inside the pre-event span of any
    onset.
    """
    times = np.asarray(times, dtype=float)
    macro_ids = np.asarray(macro_ids, dtype=int)
    onsets = np.asarray(onsets, dtype=float)
    parts = _axes("Online cluster membership over time", "time (min)", "cluster")

    if times.size:
        t_min, t_max = float(times.min()), float(times.max())
        distinct = sorted(set(int(m) for m in macro_ids if m >= 0))
        level_of = {m: i + 1 for i, m in enumerate(distinct)}  # 0 reserved for outliers
        n_levels = len(distinct) + 1
        y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

        def ymap(level):
            return y0 - (level + 0.5) / (n_levels + 0.5) * (y0 - y1)

        parts.append(
            f'<text x="{MARGIN_L - 6}" y="{ymap(0) + 4:.1f}" text-anchor="end" font-size="11">outlier</text>'
        )
        for m in distinct:
            parts.append(
                f'<text x="{MARGIN_L - 6}" y="{ymap(level_of[m]) + 4:.1f}" '
                f'text-anchor="end" font-size="11">c{m}</text>'
            )

        for o in onsets:
            x = _xmap(o, t_min, t_max)
            if MARGIN_L <= x <= WIDTH - MARGIN_R:
                parts.append(
                    f'<line x1="{x:.1f}" y1="{y1}" x2="{x:.1f}" y2="{y0}" '
                    f'stroke="#d62728" stroke-dasharray="4,3"/>'
                )

        pre_mask = np.zeros(times.size, dtype=bool)
        for o in onsets:
            pre_mask |= (times >= o - pre_event_span) & (times < o)

        for t, m, pre in zip(times, macro_ids, pre_mask):
            lvl = 0 if m < 0 else level_of[int(m)]
            x, y = _xmap(t, t_min, t_max), ymap(lvl)
            color = "#7f7f7f" if m < 0 else PALETTE[lvl % len(PALETTE)]
            if pre:
                parts.append(
                    f'<path d="M {x - 4:.1f} {y - 4:.1f} L {x + 4:.1f} {y + 4:.1f} '
                    f'M {x - 4:.1f} {y + 4:.1f} L {x + 4:.1f} {y - 4:.1f}" '
                    f'stroke="{color}" stroke-width="1.5" fill="none"/>'
                )
            else:
                parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>')

        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            t = t_min + frac * (t_max - t_min)
            x = _xmap(t, t_min, t_max)
            parts.append(
                f'<text x="{x:.1f}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
                f'font-size="11">{_fmt(t / 60.0)}</text>'
            )

    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def sweep_svg(k_values, series: dict[str, list[float | None]], path) -> None:
    """Metric-vs-confidence-window-size chart; one polyline per metric."""
    ks = list(k_values)
    parts = _axes("Evaluation metrics vs confidence window size", "k (windows)", "metric value")
    if ks:
        k_min, k_max = min(ks), max(ks)
        all_vals = [v for vals in series.values() for v in vals if v is not None]
        v_max = max(1.0, max(all_vals) if all_vals else 1.0)
        y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

        def xmap(k):
            span = max(k_max - k_min, 1)
            return MARGIN_L + (k - k_min) / span * (WIDTH - MARGIN_L - MARGIN_R)

        def ymap(v):
            return y0 - (v / v_max) * (y0 - y1)

        for k in ks:
            parts.append(
                f'<text x="{xmap(k):.1f}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
                f'font-size="11">{k}</text>'
            )
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            v = frac * v_max
            parts.append(
                f'<text x="{MARGIN_L - 6}" y="{ymap(v) + 4:.1f}" text-anchor="end" '
                f'font-size="11">{_fmt(v)}</text>'
            )

        for idx, (name, vals) in enumerate(series.items()):
            color = PALETTE[idx % len(PALETTE)]
            pts = [
                f"{xmap(k):.1f},{ymap(v):.1f}" for k, v in zip(ks, vals) if v is not None
            ]
            if pts:
                parts.append(
                    f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" stroke-width="2"/>'
                )
            ly = MARGIN_T + 16 + 16 * idx
            parts.append(
                f'<line x1="{WIDTH - MARGIN_R - 130}" y1="{ly - 4}" x2="{WIDTH - MARGIN_R - 106}" '
                f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{WIDTH - MARGIN_R - 100}" y="{ly}" font-size="12">{name}</text>'
            )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
