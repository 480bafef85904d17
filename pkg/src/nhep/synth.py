"""Synthetic RR / ECG generators with injected pre-event drift.

The normal regime is a modulated RR series built from four HRV carriers
spanning the analysis band. Carrier depths switch together between two
normal states with opposite hi/lo patterns:

    state A: (hi, lo, hi, lo)
    state B: (lo, hi, lo, hi)

with smooth crossfades, plus white per-beat jitter and occasional short
high-noise bouts (movement-artifact stand-ins). Every feature channel is
therefore dominated by the deterministic state contrast, so normal
windows fall into a small number of stereotyped patterns - the setting
online clustering expects - while reconstruction error still fluctuates
over a wide range on perfectly normal data (bouts, state differences).

Drift profiles injected for ``drift_lead`` seconds before each onset:

* ``spectral_shift`` - the two fast carriers go strong at once (the
  slow ones settle midway): a combination never seen in the normal
  states. Per-channel energies stay inside their normal ranges; only the
  joint pattern is new. Subtle for an error scalar, distinct for a
  clusterer.
* ``variance_ramp``  - per-beat jitter ramps up toward the onset.
* ``abrupt_spike``   - large alternating RR excursions; sharp and visible.

At each onset the heart rate is pinned below the bradycardia threshold
for a few seconds, then recovers. Everything is deterministic per seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .signal_prep import BeatSeries, EcgSeries

__all__ = [
    "SynthSpec",
    "SynthResult",
    "generate",
    "ecg_from_beats",
    "write_drift_csv",
    "read_drift_csv",
]

DRIFT_TYPES = ("spectral_shift", "variance_ramp", "abrupt_spike")

# Matches the default evaluation margins: events closer than this would
# entangle one event's exclusion zone with the next one's pre-span.
MIN_EVENT_SEPARATION = 540.0

DIP_RR = 60.0 / 85.0  # forced bradycardia interval at the onset
DIP_DURATION = 1.5

# Carriers sit on analysis channels, spaced so that no channel hears two
# carriers at comparable strength (that would beat and destroy the
# stereotypy of window features).
CARRIER_FREQS = (0.0147, 0.0471, 0.102, 0.15)
DEPTH_PROFILE = np.array([0.6, 0.8, 0.9, 1.0])  # relative depth per carrier
STATE_A_PATTERN = np.array([1.0, -1.0, 1.0, -1.0])  # exponents of the contrast
# Drift: slow carriers settle midway; the fast pair goes jointly strong, a
# combination distinct from both normal states. Only fast scales respond
# within a 2-minute lead, so the discriminative bits live there.
DRIFT_PATTERN = np.array([0.0, 0.0, 1.0, 1.4])

HOLD_SPAN = 300.0  # seconds before each drift during which the state is pinned
HOLD_FADE = 60.0


@dataclass(frozen=True)
class SynthSpec:
    duration: float
    event_count: int
    seed: int = 0
    base_rr: float = 0.29
    carrier_freqs: tuple[float, ...] = CARRIER_FREQS
    mod_depth: float = 0.06  # overall modulation depth scale
    state_contrast: float = 2.2  # hi/lo depth ratio between states
    switch_period: float = 900.0  # seconds per normal state
    switch_fade: float = 40.0  # crossfade width
    noise_level: float = 0.001  # white per-beat RR jitter (relative)
    bout_every: float = 500.0  # mean gap between noise bouts
    bout_len: float = 60.0
    bout_gain: float = 20.0  # jitter multiplier inside a bout
    drift_type: str = "spectral_shift"
    drift_lead: float = 120.0
    drift_magnitude: float = 1.0
    events_after_frac: float = 0.4  # keep the training prefix event-free

    def __post_init__(self):
        if self.duration <= 0 or self.base_rr <= 0:
            raise ValueError("duration and base_rr must be positive")
        if self.event_count < 0:
            raise ValueError("event_count must be >= 0")
        if self.drift_type not in DRIFT_TYPES:
            raise ValueError(f"drift_type must be one of {DRIFT_TYPES}")
        if not (0 < self.drift_lead <= 180.0):
            raise ValueError("drift_lead must be in (0, 180] seconds")
        if not (0 <= self.events_after_frac < 1):
            raise ValueError("events_after_frac must be in [0, 1)")
        if self.noise_level < 0 or self.mod_depth < 0:
            raise ValueError("noise_level and mod_depth must be >= 0")
        if len(self.carrier_freqs) != len(DEPTH_PROFILE) or any(
            f <= 0 for f in self.carrier_freqs
        ):
            raise ValueError(f"carrier_freqs must be {len(DEPTH_PROFILE)} positive frequencies")
        if self.state_contrast < 1 or self.switch_period <= 0:
            raise ValueError("state_contrast must be >= 1 and switch_period positive")
        if self.bout_every <= 0 or self.bout_len < 0 or self.bout_gain < 1:
            raise ValueError("invalid bout settings")


@dataclass
class SynthResult:
    beats: BeatSeries
    onsets: np.ndarray
    drift_intervals: list[tuple[float, float]]  # (start, onset); end == onset
    spec: SynthSpec


def _place_onsets(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.event_count == 0:
        return np.empty(0)
    region_start = spec.duration * spec.events_after_frac
    region_start = max(region_start, spec.drift_lead + 1.0)
    span = spec.duration - region_start - (DIP_DURATION + 60.0)
    slot = span / spec.event_count
    if slot <= MIN_EVENT_SEPARATION + 30.0:
        raise ValueError(
            "events cannot be separated by more than "
            f"{MIN_EVENT_SEPARATION:.0f} s; extend duration or drop events"
        )
    jitter = rng.uniform(-15.0, 15.0, size=spec.event_count)
    onsets = region_start + slot * (np.arange(spec.event_count) + 0.5) + jitter
    return np.sort(onsets)


def _draw_bouts(
    spec: SynthSpec, rng: np.random.Generator, protected: list[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Exponential-gap noise bouts, skipping protected (pre-event) spans."""
    bouts = []
    t = rng.exponential(spec.bout_every)
    while t < spec.duration:
        start, end = t, t + spec.bout_len
        if not any(start <= pe and ps <= end for ps, pe in protected):
            bouts.append((start, end))
        t = end + rng.exponential(spec.bout_every)
    return bouts


def generate(spec: SynthSpec) -> SynthResult:
    """Build the beat series, event onsets and ground-truth drift intervals."""
    rng = np.random.default_rng(spec.seed)
    onsets = _place_onsets(spec, rng)
    drifts = [(o - spec.drift_lead, o) for o in onsets]
    protected = [(start - 60.0, onset + DIP_DURATION) for start, onset in drifts]
    bouts = _draw_bouts(spec, rng, protected)

    freqs = np.asarray(spec.carrier_freqs)
    phases = rng.uniform(0, 2 * np.pi, size=freqs.size)
    switch_offset = rng.uniform(0, 2 * spec.switch_period)

    base_depths = spec.mod_depth * DEPTH_PROFILE
    half_log_contrast = 0.5 * math.log(spec.state_contrast)
    mag = spec.drift_magnitude

    # Smooth square wave in [-1, 1]: +1 in state A, -1 in state B.
    softness = max(spec.switch_fade, 1.0) * math.pi / (2.0 * spec.switch_period)

    def state_wave(t: float) -> float:
        s = math.sin(math.pi * (t + switch_offset) / spec.switch_period)
        w = math.tanh(s / softness)
        # Pin the state ahead of each event so drift always grows out of the
        # same normal context; without this the slowest scales stamp each
        # event's windows with whatever state happened to surround it. The
        # hold ramps in and releases smoothly.
        candidates = drifts[max(0, event_idx - 1) : event_idx + 1]
        for ds, onset in candidates:
            hold_start = ds - HOLD_SPAN
            hold_end = onset + DIP_DURATION
            if hold_start <= t < hold_end:
                hb = min(1.0, (t - hold_start) / HOLD_FADE)
            elif hold_end <= t < hold_end + HOLD_FADE:
                hb = 1.0 - (t - hold_end) / HOLD_FADE
            else:
                continue
            return (1.0 - hb) * w + hb
        return w

    fade_in, fade_out = 2.0, 60.0  # drift regime crossfades (seconds)

    def drift_blend(t: float) -> float:
        if event_idx >= onsets.size:
            return 0.0
        ds, onset = drifts[event_idx]
        if ds <= t < onset:
            return min(1.0, (t - ds) / fade_in)
        dip_end = onset + DIP_DURATION
        if dip_end <= t < dip_end + fade_out:
            return 1.0 - (t - dip_end) / fade_out
        return 0.0

    def depth_vector(t: float, wd: float) -> np.ndarray:
        # geometric blend: normal states along the A/B axis, drift pattern on top
        log_norm = STATE_A_PATTERN * (half_log_contrast * state_wave(t))
        log_drift = DRIFT_PATTERN * half_log_contrast * mag
        return base_depths * np.exp((1.0 - wd) * log_norm + wd * log_drift)

    def carriers(t: float, depths: np.ndarray) -> float:
        return float(np.dot(depths, np.sin(2 * np.pi * freqs * t + phases)))

    times = [0.0]
    t = 0.0
    event_idx = 0  # first event whose dip end is still ahead
    bout_idx = 0
    spike_counter = 0
    while t < spec.duration:
        while event_idx < onsets.size and t >= onsets[event_idx] + DIP_DURATION:
            event_idx += 1
        while bout_idx < len(bouts) and t >= bouts[bout_idx][1]:
            bout_idx += 1
        in_dip = (
            event_idx < onsets.size and onsets[event_idx] <= t < onsets[event_idx] + DIP_DURATION
        )
        in_drift = event_idx < onsets.size and drifts[event_idx][0] <= t < onsets[event_idx]
        in_bout = bout_idx < len(bouts) and bouts[bout_idx][0] <= t < bouts[bout_idx][1]

        noise = spec.noise_level * (spec.bout_gain if in_bout else 1.0)
        eps = rng.standard_normal()

        if in_dip:
            rr = DIP_RR * (1.0 + 0.3 * spec.noise_level * eps)
        elif spec.drift_type == "spectral_shift":
            rr = spec.base_rr * (1.0 + carriers(t, depth_vector(t, drift_blend(t))) + noise * eps)
        elif in_drift and spec.drift_type == "variance_ramp":
            frac = (t - drifts[event_idx][0]) / spec.drift_lead
            boost = 1.0 + 4.0 * mag * frac
            rr = spec.base_rr * (1.0 + carriers(t, depth_vector(t, 0.0)) + boost * noise * eps)
        elif in_drift:  # abrupt_spike
            spike_counter += 1
            spike = (
                0.25 * mag * (1 if spike_counter % 2 else -1) if spike_counter % 4 < 2 else 0.0
            )
            rr = spec.base_rr * (1.0 + carriers(t, depth_vector(t, 0.0)) + spike + noise * eps)
        else:
            rr = spec.base_rr * (1.0 + carriers(t, depth_vector(t, 0.0)) + noise * eps)

        rr = max(rr, 0.2)
        t += rr
        times.append(t)

    beats = BeatSeries.from_times(np.asarray(times))
    return SynthResult(beats=beats, onsets=onsets, drift_intervals=drifts, spec=spec)


def ecg_from_beats(
    beat_times,
    fs: float = 250.0,
    amplitude: float = 1.0,
    qrs_width: float = 0.02,
    snr_db: float | None = None,
    seed: int = 0,
    duration: float | None = None,
) -> EcgSeries:
    """Gaussian-bump QRS train with optional additive noise.

    ``snr_db`` is the peak-amplitude-to-noise-sigma ratio in dB; None means
    noise-free.
    """
    beat_times = np.asarray(beat_times, dtype=float)
    if duration is None:
        duration = (beat_times[-1] if beat_times.size else 0.0) + 0.5
    n = int(round(duration * fs))
    tgrid = np.arange(n) / fs
    x = np.zeros(n)
    for bt in beat_times:
        lo = max(0, int((bt - 5 * qrs_width) * fs))
        hi = min(n, int((bt + 5 * qrs_width) * fs) + 1)
        x[lo:hi] += amplitude * np.exp(-0.5 * ((tgrid[lo:hi] - bt) / qrs_width) ** 2)
    if snr_db is not None:
        sigma = amplitude * 10 ** (-snr_db / 20.0)
        x = x + np.random.default_rng(seed).normal(0, sigma, size=n)
    return EcgSeries(sample_rate=fs, samples=x)


def write_drift_csv(drift_intervals, drift_type: str, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["drift_start_sec", "onset_sec", "profile"])
        for start, onset in drift_intervals:
            w.writerow([f"{start:.6f}", f"{onset:.6f}", drift_type])


def read_drift_csv(path) -> list[tuple[float, float, str]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "drift_start_sec",
            "onset_sec",
            "profile",
        ]:
            raise DataError(f"{path}: expected header 'drift_start_sec,onset_sec,profile'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append((float(row[0]), float(row[1]), row[2]))
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    return out
