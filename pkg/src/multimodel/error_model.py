"""Per-model error clusters over (actual, predicted) confusion categories.

Each trained model's behaviour on the training set is summarised by four
centroids in scaled feature space: c00 true negatives, c01 false positives,
c10 false negatives, c11 true positives. A test record's distances to those
centroids drive participation and weighting downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import FeatureScaler, PatientRecord
from .errors import DimensionMismatchError, EmptyDatasetError, InvalidParamsError
from .learners import TrainedModel, train_model

CATEGORIES = ("c00", "c01", "c10", "c11")

CLASS_THRESHOLD = 0.5


@dataclass(frozen=True)
class DistanceVector:
    """Distances to the four cluster centroids; +inf marks an empty cluster."""

    d00: float
    d01: float
    d10: float
    d11: float

    def __post_init__(self):
        for name, value in self.as_mapping().items():
            if math.isnan(value) or value < 0:
                raise InvalidParamsError(f"distance {name} must be >= 0 or +inf, got {value!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.d00, self.d01, self.d10, self.d11)

    def as_mapping(self) -> dict[str, float]:
        return {"d00": self.d00, "d01": self.d01, "d10": self.d10, "d11": self.d11}


@dataclass(frozen=True)
class ErrorClusterSet:
    """Four confusion-category centroids with member counts for one model."""

    model_id: str
    dimension: int
    centroids: Mapping[str, tuple[float, ...] | None]
    counts: Mapping[str, int]

    def __post_init__(self):
        if set(self.centroids) != set(CATEGORIES) or set(self.counts) != set(CATEGORIES):
            raise InvalidParamsError("centroids and counts must cover exactly c00, c01, c10, c11")
        for category in CATEGORIES:
            centroid = self.centroids[category]
            count = self.counts[category]
            if count < 0:
                raise InvalidParamsError(f"{category}: negative member count")
            if (centroid is None) != (count == 0):
                raise InvalidParamsError(f"{category}: empty centroid and zero count must coincide")
            if centroid is not None:
                if len(centroid) != self.dimension:
                    raise InvalidParamsError(f"{category}: centroid dimension mismatch")
                if any(not (0.0 <= v <= 1.0) for v in centroid):
                    raise InvalidParamsError(f"{category}: centroid outside the unit cube")

    @property
    def total_members(self) -> int:
        return sum(self.counts.values())


def _category_index(actual: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    # (actual, predicted) -> 0:c00 1:c01 2:c10 3:c11
    return actual * 2 + predicted


def _out_of_fold_rho(model: TrainedModel, train: Sequence[PatientRecord], scaler: FeatureScaler, folds: int) -> np.ndarray:
    """Predictions where each record's model was trained without its fold."""
    n = len(train)
    k = min(folds, n)
    rho = np.empty(n, dtype=float)
    X = scaler.transform_records(train)
    if k < 2:
        return model.predict_many(X)
    assignment = np.arange(n) % k
    for fold in range(k):
        held_out = assignment == fold
        fit_records = [r for r, out in zip(train, held_out) if not out]
        fold_model = train_model(model.spec, fit_records, scaler)
        rho[held_out] = fold_model.predict_many(X[held_out])
    return rho


def build_error_clusters(
    model: TrainedModel,
    train: Sequence[PatientRecord],
    scaler: FeatureScaler,
    *,
    out_of_fold: bool = False,
) -> ErrorClusterSet:
    """Partition the training set by (actual, predicted >= 0.5) and average.

    With ``out_of_fold`` the predictions come from 5-fold held-out retrains
    instead of the model's own training-set predictions.
    """
    if not train:
        raise EmptyDatasetError("cannot build error clusters on an empty dataset")
    if any(r.label is None for r in train):
        raise InvalidParamsError("error clusters require labelled records")
    X = scaler.transform_records(train)
    if out_of_fold:
        rho = _out_of_fold_rho(model, train, scaler, folds=5)
    else:
        rho = model.predict_many(X)
    actual = np.array([r.label for r in train], dtype=int)
    predicted = (rho >= CLASS_THRESHOLD).astype(int)
    index = _category_index(actual, predicted)
    centroids: dict[str, tuple[float, ...] | None] = {}
    counts: dict[str, int] = {}
    for i, category in enumerate(CATEGORIES):
        mask = index == i
        count = int(mask.sum())
        counts[category] = count
        if count == 0:
            centroids[category] = None
        else:
            mean = np.clip(X[mask].mean(axis=0), 0.0, 1.0)
            centroids[category] = tuple(float(v) for v in mean)
    return ErrorClusterSet(
        model_id=model.spec.model_id,
        dimension=X.shape[1],
        centroids=centroids,
        counts=counts,
    )


def distance_vector(clusters: ErrorClusterSet, scaled_features: Sequence[float]) -> DistanceVector:
    """Euclidean distances from a scaled query to the four centroids."""
    query = np.asarray(scaled_features, dtype=float)
    if query.ndim != 1 or len(query) != clusters.dimension:
        raise DimensionMismatchError(
            f"query has shape {query.shape}, expected ({clusters.dimension},)"
        )
    distances = []
    for category in CATEGORIES:
        centroid = clusters.centroids[category]
        if centroid is None:
            distances.append(math.inf)
        else:
            diff = query - np.asarray(centroid)
            distances.append(float(np.sqrt(np.dot(diff, diff))))
    return DistanceVector(*distances)
