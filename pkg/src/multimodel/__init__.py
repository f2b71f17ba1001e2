"""Multi-model outcome prediction with error-cluster contention.

Train a roster of base models, summarise each model's training errors as
four confusion-category clusters, then consolidate per-record predictions
with distance-based participation and normalized inverse-distance weights.
"""

from .consolidator import (
    ConsolidationResult,
    PredictionVector,
    binarize,
    confidence_distance,
    consolidate_dynamic,
    consolidate_static,
    efficiency,
    idw_weights,
    participates,
)
from .dataset import (
    DatasetSchema,
    FeatureScaler,
    PatientRecord,
    default_schema,
    fit_scaler,
    parse_records,
    records_to_csv,
    split_records,
)
from .error_model import DistanceVector, ErrorClusterSet, build_error_clusters, distance_vector
from .learners import ModelSpec, TrainedModel, build_roster, default_roster_config, train_model
from .pipeline import ModelBundle, WireLine, load_bundle, map_stage, reduce_stage, run_local, save_bundle

__version__ = "0.1.0"

__all__ = [
    "ConsolidationResult",
    "DatasetSchema",
    "DistanceVector",
    "ErrorClusterSet",
    "FeatureScaler",
    "ModelBundle",
    "ModelSpec",
    "PatientRecord",
    "PredictionVector",
    "TrainedModel",
    "WireLine",
    "binarize",
    "build_error_clusters",
    "build_roster",
    "confidence_distance",
    "consolidate_dynamic",
    "consolidate_static",
    "default_roster_config",
    "default_schema",
    "distance_vector",
    "efficiency",
    "fit_scaler",
    "idw_weights",
    "load_bundle",
    "map_stage",
    "parse_records",
    "participates",
    "records_to_csv",
    "reduce_stage",
    "run_local",
    "save_bundle",
    "split_records",
    "train_model",
]
