"""Temporal persistence, intercorrelation and EER of eye-movement embeddings
under sampling-rate, data-length, sequence-count and spatial-precision
manipulations."""

from .embed import SeededConvEmbedder, StatFeatureEmbedder, build_embedding_matrix, centroid, embed_sequence
from .experiment import ExperimentConfig, load_config, run_condition, run_sweep, subject_spatial_precision
from .fitting import FitResult, fit_linear, fit_log, r_squared
from .manipulate import (
    ManipulationSpec,
    decimate,
    inject_noise,
    percentage_truncate,
    spatial_precision,
    take_first_sequences,
)
from .metrics import build_score_sets, cosine_similarity, eer, intercorrelation, kendalls_w, temporal_persistence
from .model import (
    DatasetManifest,
    EmbeddingMatrix,
    GazeRecording,
    MetricReport,
    SequenceBatch,
    load_manifest,
    load_recording,
    read_embeddings,
    validate_manifest,
    write_embeddings,
)
from .preprocess import (
    NormalizationStats,
    PreprocessConfig,
    apply_gaze_bounds,
    clamp_velocity,
    fit_normalization,
    normalize_and_fill,
    preprocess_pipeline,
    segment_sequences,
    sg_velocity,
)
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"
