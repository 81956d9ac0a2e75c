"""Streaming anomaly detection with a cached left matrix profile."""

from .core import (
    DegenerateSubsequenceError,
    InconsistentStateError,
    RollingStats,
    WindowStats,
    distance_via_stats,
    mean_normalized_distance,
    update_inner_product,
    znorm_distance,
    znorm_distance_via_stats,
)
from .engine import (
    MODES,
    DetectionOutcome,
    EngineConfig,
    IngestError,
    OnlineMatrixProfile,
    SRDetector,
    decide,
    distance_significance,
    make_detector,
)
from .evaluation import EvalReport, adjust_predictions, score
from .ingest import GapFiller, LabeledSeries, fill_missing, parse, synthesize
from .spectral import SRConfig, dft, idft, sr_saliency, sr_score

__version__ = "0.1.0"
