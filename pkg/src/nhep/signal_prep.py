"""Signal preparation: ECG to per-beat feature windows.

The chain is: R-peak detection on raw ECG -> RR (heart rate variability)
series -> Morlet continuous wavelet transform magnitudes in a low-frequency
band, sampled back at beat times -> fixed-length beat windows -> per-channel
z-scoring with a scaler fitted on training data only.

All functions are pure; nothing here keeps mutable state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import butter, fftconvolve, filtfilt, find_peaks

from .errors import DataError

__all__ = [
    "EcgSeries",
    "BeatSeries",
    "CwtConfig",
    "FeatureWindow",
    "FeatureScaler",
    "detect_r_peaks",
    "rr_series",
    "clean_rr",
    "derive_bradycardia_onsets",
    "pseudo_frequencies",
    "cwt_uniform",
    "morlet_cwt",
    "segment_windows",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
    "read_ecg_csv",
    "write_ecg_csv",
    "read_beats_csv",
    "write_beats_csv",
    "read_events_csv",
    "write_events_csv",
]


@dataclass(frozen=True)
class EcgSeries:
    """Uniformly sampled single-lead ECG (amplitudes in millivolts)."""

    sample_rate: float
    samples: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class BeatSeries:
    """Beat timestamps (seconds) and the derived RR intervals.

    ``rr[i] = beat_times[i+1] - beat_times[i]``; the interval is attributed
    to the beat that completes it.
    """

    beat_times: np.ndarray
    rr: np.ndarray

    def __post_init__(self):
        bt = np.asarray(self.beat_times, dtype=float)
        rr = np.asarray(self.rr, dtype=float)
        object.__setattr__(self, "beat_times", bt)
        object.__setattr__(self, "rr", rr)
        if bt.size >= 2 and not np.all(np.diff(bt) > 0):
            raise ValueError("non-monotone beats")
        if bt.size >= 1 and rr.size != bt.size - 1:
            raise ValueError("rr length must be len(beat_times) - 1")

    @classmethod
    def from_times(cls, beat_times) -> "BeatSeries":
        bt = np.asarray(beat_times, dtype=float)
        rr = np.diff(bt) if bt.size >= 1 else np.empty(0)
        return cls(beat_times=bt, rr=rr)

    @property
    def n_beats(self) -> int:
        return int(self.beat_times.size)

    def crop(self, t_max: float) -> "BeatSeries":
        """Beats with time <= t_max (used to fence off training data)."""
        return BeatSeries.from_times(self.beat_times[self.beat_times <= t_max])


@dataclass(frozen=True)
class CwtConfig:
    """Morlet CWT band and discretization.

    Pseudo-frequencies of the analyzed scales span [f_min, f_max]; the RR
    series is first resampled to a uniform grid at ``resample_rate``.
    """

    f_min: float = 0.01
    f_max: float = 0.15
    n_scales: int = 8
    omega0: float = 6.0
    resample_rate: float = 4.0

    def __post_init__(self):
        if not (0 < self.f_min < self.f_max):
            raise ValueError("invalid band")
        if self.resample_rate <= 2 * self.f_max:
            raise ValueError("invalid band")
        if self.n_scales < 1:
            raise ValueError("n_scales must be >= 1")
        if self.omega0 < 5:
            raise ValueError("omega0 must be >= 5 for admissibility")


@dataclass
class FeatureWindow:
    """A contiguous run of beats with one feature vector per beat."""

    window_id: int
    beat_start: int
    beat_stop: int
    features: np.ndarray  # (length, n_channels)
    end_time: float
    scaled: bool = False

    @property
    def length(self) -> int:
        return self.beat_stop - self.beat_start

    @property
    def n_channels(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True)
class FeatureScaler:
    """Per-channel mean/std fitted on training windows only."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # channels whose training std was zero

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": [bool(c) for c in self.constant],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            std=np.asarray(d["std"], dtype=float),
            constant=np.asarray(d["constant"], dtype=bool),
        )


# ---------------------------------------------------------------------------
# R-peak detection (Pan-Tompkins style chain)
# ---------------------------------------------------------------------------

REFRACTORY_S = 0.2


def detect_r_peaks(ecg: EcgSeries) -> BeatSeries:
    """Detect R peaks with a band-pass / derivative / squaring / integration
    chain and an adaptive signal-vs-noise threshold.

    Requires >= 2 s of signal at >= 100 Hz. A flat signal yields an empty
    beat list.
    """
    if ecg.sample_rate < 100:
        raise ValueError("sample rate below 100 Hz")
    if ecg.duration < 2.0:
        raise ValueError("insufficient signal")

    x = ecg.samples
    if np.ptp(x) == 0:
        return BeatSeries.from_times(np.empty(0))

    fs = ecg.sample_rate
    nyq = fs / 2.0
    b, a = butter(2, [5.0 / nyq, 25.0 / nyq], btype="band")
    filtered = filtfilt(b, a, x)

    deriv = np.gradient(filtered) * fs
    squared = deriv**2
    win = max(1, int(round(0.150 * fs)))
    integrated = np.convolve(squared, np.ones(win) / win, mode="same")

    spacing = max(1, int(round(REFRACTORY_S * fs)))
    cand, _ = find_peaks(integrated, distance=spacing)
    if cand.size == 0:
        return BeatSeries.from_times(np.empty(0))

    # Adaptive threshold: running signal (SPK) and noise (NPK) peak levels.
    warmup = integrated[: int(2 * fs)]
    spk = float(np.max(warmup))
    npk = float(np.mean(warmup))
    accepted = []
    for idx in cand:
        v = integrated[idx]
        thr = npk + 0.25 * (spk - npk)
        if v >= thr:
            accepted.append(idx)
            spk = 0.125 * v + 0.875 * spk
        else:
            npk = 0.125 * v + 0.875 * npk

    # Refine each fiducial to the strongest band-passed excursion nearby.
    refine = int(round(0.10 * fs))
    peaks = []
    for idx in accepted:
        lo = max(0, idx - refine)
        hi = min(x.size, idx + refine + 1)
        peaks.append(lo + int(np.argmax(np.abs(filtered[lo:hi]))))
    peaks = np.unique(peaks)

    # Enforce the refractory constraint after refinement.
    kept: list[int] = []
    for p in peaks:
        if kept and (p - kept[-1]) < spacing:
            if np.abs(filtered[p]) > np.abs(filtered[kept[-1]]):
                kept[-1] = p
            continue
        kept.append(int(p))

    times = ecg.start_time + np.asarray(kept, dtype=float) / fs
    return BeatSeries.from_times(times)


def rr_series(beat_times) -> BeatSeries:
    """Build a BeatSeries from raw beat timestamps."""
    bt = np.asarray(beat_times, dtype=float)
    if bt.size < 2:
        raise ValueError("need at least two beats")
    if not np.all(np.diff(bt) > 0):
        raise ValueError("non-monotone beats")
    return BeatSeries.from_times(bt)


def clean_rr(beats: BeatSeries, max_ratio: float = 1.25, median_win: int = 31) -> np.ndarray:
    """Winsorize RR values against a running median (artifact rejection).

    Ectopic beats and bradycardic excursions otherwise bleed into the
    wavelet coefficients of every window within the wavelet support. Beat
    times are untouched; only the RR values fed to the transform change.
    Returns the cleaned RR array aligned with ``beats.rr``.
    """
    if max_ratio <= 1:
        raise ValueError("max_ratio must be > 1")
    rr = beats.rr
    if rr.size == 0:
        return rr.copy()
    med = median_filter(rr, size=min(median_win, rr.size), mode="nearest")
    return np.clip(rr, med / max_ratio, med * max_ratio)


def derive_bradycardia_onsets(
    beats: BeatSeries, hr_threshold: float = 100.0, min_beats: int = 2
) -> np.ndarray:
    """Start times of maximal runs of >= min_beats consecutive beats whose
    instantaneous heart rate (60/rr of the interval each beat completes)
    is below hr_threshold.
    """
    if beats.rr.size == 0:
        return np.empty(0)
    qualifies = (60.0 / beats.rr) < hr_threshold
    onsets = []
    run = 0
    for i, q in enumerate(qualifies):
        if q:
            run += 1
        else:
            if run >= min_beats:
                onsets.append(beats.beat_times[i - run + 1])
            run = 0
    if run >= min_beats:
        onsets.append(beats.beat_times[qualifies.size - run + 1])
    return np.asarray(onsets, dtype=float)


# ---------------------------------------------------------------------------
# Morlet CWT of the RR series
# ---------------------------------------------------------------------------


def pseudo_frequencies(cfg: CwtConfig) -> np.ndarray:
    """Log-spaced pseudo-frequencies of the analyzed scales (ascending)."""
    return np.geomspace(cfg.f_min, cfg.f_max, cfg.n_scales)


def _morlet_kernel(scale: float, fs: float, omega0: float) -> np.ndarray:
    """Convolution kernel so that ``fftconvolve(x, kernel, 'same')`` equals
    (1/sqrt(s)) * integral x(t) conj(psi((t - tau)/s)) dt on the sample grid.
    """
    half = int(np.ceil(5.0 * scale * fs))
    u = np.arange(-half, half + 1) / fs
    envelope = np.exp(-0.5 * (u / scale) ** 2)
    carrier = np.exp(1j * omega0 * u / scale)
    return (np.pi**-0.25) / np.sqrt(scale) * envelope * carrier / fs


def cwt_uniform(x: np.ndarray, fs: float, cfg: CwtConfig) -> np.ndarray:
    """Complex Morlet CWT of a uniformly sampled, mean-removed signal.

    Returns (n_scales, n_samples), scales ordered by ascending
    pseudo-frequency. FFT-based convolution; the test suite checks it
    against direct time-domain convolution.
    """
    x = np.asarray(x, dtype=float)
    freqs = pseudo_frequencies(cfg)
    out = np.empty((freqs.size, x.size), dtype=complex)
    for row, f in enumerate(freqs):
        scale = cfg.omega0 / (2 * np.pi * f)
        out[row] = fftconvolve(x, _morlet_kernel(scale, fs, cfg.omega0), mode="same")
    return out


def morlet_cwt(
    beats: BeatSeries, cfg: CwtConfig = CwtConfig(), rr_values: np.ndarray | None = None
) -> np.ndarray:
    """Per-beat CWT magnitudes of the RR series.

    The RR series is linearly interpolated onto a uniform grid at
    ``cfg.resample_rate``, mean-removed, transformed, and the coefficient
    magnitudes are sampled back at each beat time. Returns an
    (n_beats, n_scales) matrix aligned with ``beats.beat_times``.
    ``rr_values`` substitutes for ``beats.rr`` (e.g. after ``clean_rr``).
    """
    if beats.n_beats < 32:
        raise ValueError("insufficient beats")
    rr = beats.rr if rr_values is None else np.asarray(rr_values, dtype=float)
    if rr.shape != beats.rr.shape:
        raise ValueError("rr_values must align with beats.rr")
    # rr[i] completes at beat_times[i+1]
    rr_times = beats.beat_times[1:]
    grid = np.arange(rr_times[0], rr_times[-1], 1.0 / cfg.resample_rate)
    x = np.interp(grid, rr_times, rr)
    x = x - x.mean()
    mags = np.abs(cwt_uniform(x, cfg.resample_rate, cfg))
    feats = np.empty((beats.n_beats, cfg.n_scales))
    for j in range(cfg.n_scales):
        feats[:, j] = np.interp(beats.beat_times, grid, mags[j])
    return feats


# ---------------------------------------------------------------------------
# Windowing and scaling
# ---------------------------------------------------------------------------


def segment_windows(
    features: np.ndarray,
    beat_times: np.ndarray,
    window_len: int = 64,
    stride: int = 64,
) -> list[FeatureWindow]:
    """Cut the per-beat feature matrix into fixed-length windows.

    Window k covers beat indices [k*stride, k*stride + window_len); a
    trailing partial window is dropped. ``end_time`` is the time of the
    last beat in the window.
    """
    if window_len < 2:
        raise ValueError("window_len must be >= 2")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    features = np.asarray(features, dtype=float)
    beat_times = np.asarray(beat_times, dtype=float)
    n = features.shape[0]
    windows = []
    k = 0
    while k * stride + window_len <= n:
        start = k * stride
        stop = start + window_len
        windows.append(
            FeatureWindow(
                window_id=k,
                beat_start=start,
                beat_stop=stop,
                features=features[start:stop].copy(),
                end_time=float(beat_times[stop - 1]),
            )
        )
        k += 1
    return windows


def fit_scaler(windows: list[FeatureWindow]) -> FeatureScaler:
    """Per-channel mean/std over all rows of the training windows.

    A channel with zero spread is flagged constant and its std forced to 1
    so scaling stays defined.
    """
    if not windows:
        raise ValueError("no training data")
    rows = np.concatenate([w.features for w in windows], axis=0)
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    constant = std == 0
    std = np.where(constant, 1.0, std)
    return FeatureScaler(mean=mean, std=std, constant=constant)


def apply_scaler(scaler: FeatureScaler, window: FeatureWindow) -> FeatureWindow:
    """Z-score a window. Already-scaled windows pass through unchanged."""
    if window.scaled:
        return window
    feats = (window.features - scaler.mean) / scaler.std
    return replace(window, features=feats, scaled=True)


def invert_scaler(scaler: FeatureScaler, window: FeatureWindow) -> FeatureWindow:
    """Undo ``apply_scaler``."""
    if not window.scaled:
        return window
    feats = window.features * scaler.std + scaler.mean
    return replace(window, features=feats, scaled=False)


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------


def _read_csv_rows(path, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise DataError(
                f"{path}: expected header {','.join(expected_header)!r}, got {','.join(header)!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DataError(f"{path}: line {lineno}: wrong field count")
            rows.append(row)
        return rows


def read_ecg_csv(path) -> EcgSeries:
    """Read ECG CSV with header ``t_sec,mv``; sample rate inferred from the
    median timestamp spacing."""
    rows = _read_csv_rows(path, ["t_sec", "mv"])
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two samples")
    try:
        t = np.array([float(r[0]) for r in rows])
        mv = np.array([float(r[1]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise DataError(f"{path}: t_sec must be strictly increasing")
    return EcgSeries(sample_rate=1.0 / float(np.median(dt)), samples=mv, start_time=float(t[0]))


def write_ecg_csv(ecg: EcgSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_sec", "mv"])
        for t, v in zip(ecg.times(), ecg.samples):
            w.writerow([f"{t:.6f}", f"{v:.6f}"])


def read_beats_csv(path) -> BeatSeries:
    """Read beat timestamps CSV with header ``beat_time_sec``."""
    rows = _read_csv_rows(path, ["beat_time_sec"])
    try:
        times = np.array([float(r[0]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if times.size >= 2 and not np.all(np.diff(times) > 0):
        raise DataError(f"{path}: non-monotone beats")
    return BeatSeries.from_times(times)


def write_beats_csv(beats: BeatSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beat_time_sec"])
        for t in beats.beat_times:
            w.writerow([f"{t:.6f}"])


def read_events_csv(path) -> np.ndarray:
    """Read event onsets CSV with header ``onset_sec``."""
    rows = _read_csv_rows(path, ["onset_sec"])
    try:
        onsets = np.array([float(r[0]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return np.sort(onsets)


def write_events_csv(onsets, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["onset_sec"])
        for t in np.asarray(onsets, dtype=float):
            w.writerow([f"{t:.6f}"])
