"""Unsupervised early warning of negative events in physiological time series.

Windows of a heart-rate-variability signal are embedded by an LSTM
auto-encoder into unit-norm representations, clustered online by a
density-based stream clusterer, and alarms fire when clusters outside the
calibrated normal set dominate a sliding confidence window.
"""

from .alarm import AlarmEvent, ConfidenceState, NormalClusterSet, calibrate, observe, reset
from .autoencoder import (
    ModelParams,
    TrainConfig,
    TrainResult,
    backward,
    decode,
    encode,
    encode_batch,
    init_params,
    load_model,
    loss,
    normalize_rows,
    reconstruction_error,
    save_model,
    train,
    unit_normalize,
)
from .config import PipelineConfig, config_hash, load_config_file
from .errors import ArtifactMismatchError, ConfigError, DataError
from .evaluate import (
    EvalConfig,
    EvalReport,
    baseline_recon_eval,
    compute_auc,
    evaluate_run,
    label_timeline,
    score_events,
    score_negatives,
    sweep_confidence_window,
)
from .pipeline import (
    Artifacts,
    DetectResult,
    build_windows,
    detect_pipeline,
    load_artifacts,
    save_artifacts,
    train_pipeline,
)
from .signal_prep import (
    BeatSeries,
    CwtConfig,
    EcgSeries,
    FeatureScaler,
    FeatureWindow,
    apply_scaler,
    clean_rr,
    derive_bradycardia_onsets,
    detect_r_peaks,
    fit_scaler,
    invert_scaler,
    morlet_cwt,
    rr_series,
    segment_windows,
)
from .stream_cluster import (
    Assignment,
    ClusterParams,
    ClusterState,
    MicroCluster,
    apply_decay,
    insert,
    macro_clusters,
    prune,
    snapshot,
)
from .synth import SynthSpec, SynthResult, ecg_from_beats, generate

__version__ = "0.1.0"
