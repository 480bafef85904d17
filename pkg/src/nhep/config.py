"""Pipeline configuration: defaults, key=value config files, hashing.

Defaults follow the reference operating point: 64-beat non-overlapping
windows, a 0.01-0.15 Hz Morlet band at 8 scales, a 32-unit encoder,
clustering at (eps, mu, lambda) = (0.01, 2, 0), a confidence window of 5
at a 50% threshold and 3/6-minute evaluation margins with the first third
of each recording used for training.

Config files are flat ``key = value`` lines ('#' starts a comment).
Unknown keys are rejected. Artifacts carry a hash of the full
configuration so that detection refuses to run against a model trained
under different settings unless forced.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .alarm import ConfidenceState
from .autoencoder import TrainConfig
from .errors import ConfigError
from .evaluate import EvalConfig
from .signal_prep import CwtConfig
from .stream_cluster import ClusterParams
from .synth import SynthSpec

__all__ = ["PipelineConfig", "load_config_file", "parse_config_text", "config_hash"]


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0

    # windowing
    window_len: int = 64
    stride: int = 64

    # wavelet band
    f_min: float = 0.01
    f_max: float = 0.15
    n_scales: int = 8
    omega0: float = 6.0
    resample_rate: float = 4.0

    # auto-encoder
    d_hidden: int = 32
    learning_rate: float = 1e-3
    epochs: int = 60
    batch_size: int = 32
    weight_decay: float = 1e-4
    clip_norm: float = 5.0

    # stream clustering
    eps: float = 0.01
    mu: float = 2.0
    lam: float = 0.0
    beta: float = 1.0

    # alarm engine
    k: int = 5
    threshold: float = 0.5

    # evaluation protocol
    pre_event_span: float = 180.0
    post_event_exclusion: float = 360.0
    train_fraction: float = 1.0 / 3.0

    # event rule
    hr_threshold: float = 100.0
    min_beats: int = 2

    # synthetic data generation
    synth_duration: float = 20000.0
    synth_event_count: int = 20
    synth_base_rr: float = 0.29
    synth_mod_depth: float = 0.06
    synth_state_contrast: float = 2.2
    synth_switch_period: float = 900.0
    synth_switch_fade: float = 40.0
    synth_noise_level: float = 0.001
    synth_bout_every: float = 500.0
    synth_bout_len: float = 60.0
    synth_bout_gain: float = 20.0
    synth_drift_type: str = "spectral_shift"
    synth_drift_lead: float = 120.0
    synth_drift_magnitude: float = 1.0
    synth_events_after_frac: float = 0.4

    # --- derived sub-configs -------------------------------------------

    def cwt_config(self) -> CwtConfig:
        return CwtConfig(
            f_min=self.f_min,
            f_max=self.f_max,
            n_scales=self.n_scales,
            omega0=self.omega0,
            resample_rate=self.resample_rate,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            weight_decay=self.weight_decay,
            clip_norm=self.clip_norm,
        )

    def cluster_params(self) -> ClusterParams:
        return ClusterParams(eps=self.eps, mu=self.mu, lam=self.lam, beta=self.beta)

    def confidence_state(self) -> ConfidenceState:
        return ConfidenceState(k=self.k, threshold=self.threshold)

    def eval_config(self) -> EvalConfig:
        return EvalConfig(
            pre_event_span=self.pre_event_span,
            post_event_exclusion=self.post_event_exclusion,
            train_fraction=self.train_fraction,
        )

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(
            duration=self.synth_duration,
            event_count=self.synth_event_count,
            seed=self.seed,
            base_rr=self.synth_base_rr,
            mod_depth=self.synth_mod_depth,
            state_contrast=self.synth_state_contrast,
            switch_period=self.synth_switch_period,
            switch_fade=self.synth_switch_fade,
            noise_level=self.synth_noise_level,
            bout_every=self.synth_bout_every,
            bout_len=self.synth_bout_len,
            bout_gain=self.synth_bout_gain,
            drift_type=self.synth_drift_type,
            drift_lead=self.synth_drift_lead,
            drift_magnitude=self.synth_drift_magnitude,
            events_after_frac=self.synth_events_after_frac,
        )

    def validate(self) -> "PipelineConfig":
        """Trigger validation of every derived sub-config."""
        try:
            self.cwt_config()
            self.train_config()
            self.cluster_params()
            self.confidence_state()
            self.eval_config()
            self.synth_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.window_len < 2:
            raise ConfigError("window_len must be >= 2")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.d_hidden < 1:
            raise ConfigError("d_hidden must be >= 1")
        if self.min_beats < 1 or self.hr_threshold <= 0:
            raise ConfigError("invalid event rule")
        return self

    def to_flat(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            out[key] = repr(getattr(self, f.name))
        return out


_FIELD_BY_KEY = {("lambda" if f.name == "lam" else f.name): f for f in fields(PipelineConfig)}


def _coerce(key: str, raw: str):
    f = _FIELD_BY_KEY[key]
    raw = raw.strip()
    if f.type in ("int", int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected integer, got {raw!r}") from None
    if f.type in ("float", float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected number, got {raw!r}") from None
    return raw.strip("'\"")


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_BY_KEY:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field_name = _FIELD_BY_KEY[key].name
        values[field_name] = _coerce(key, raw)
    base = base or PipelineConfig()
    merged = {f.name: getattr(base, f.name) for f in fields(PipelineConfig)}
    merged.update(values)
    return PipelineConfig(**merged).validate()


def load_config_file(path, base: PipelineConfig | None = None) -> PipelineConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return parse_config_text(text, base)


def config_hash(cfg: PipelineConfig) -> str:
    flat = cfg.to_flat()
    blob = "\n".join(f"{k}={flat[k]}" for k in sorted(flat))
    return hashlib.sha256(blob.encode()).hexdigest()
