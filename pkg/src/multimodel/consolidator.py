"""Participation decisions, inverse-distance weights, and final consolidation.

A model participates for a record when the record sits closer to the cluster
of that model's past *correct* calls than to the matching incorrect one.
Participants are then combined with normalized reciprocal-distance weights;
if nobody participates, the static mean over all models is the fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .error_model import DistanceVector
from .errors import (
    DuplicateModelError,
    EmptyInputError,
    IncompleteGroupError,
    InvalidParamsError,
    LengthMismatchError,
    MixedPatientIdsError,
    OutOfRangeError,
)

CLASS_THRESHOLD = 0.5

DISTANCE_FLOOR = 1e-9

MODE_STATIC = "static"
MODE_DYNAMIC = "dynamic"
MODE_DYNAMIC_FALLBACK = "dynamic-fallback"


@dataclass(frozen=True)
class PredictionVector:
    """One model's emission for one record: distances plus prediction rho."""

    patient_id: str
    model_id: str
    distances: DistanceVector
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise OutOfRangeError(f"rho must lie in [0, 1], got {self.rho!r}")


@dataclass(frozen=True)
class ConsolidationResult:
    """Final consolidated prediction for one patient."""

    patient_id: str
    final_rho: float
    predicted_class: int
    participating: frozenset[str]
    weights: Mapping[str, float]
    mode: str


def binarize(rho: float) -> int:
    """Map rho to a class; 0.5 breaks toward class 1."""
    if not 0.0 <= rho <= 1.0:
        raise OutOfRangeError(f"rho must lie in [0, 1], got {rho!r}")
    return 1 if rho >= CLASS_THRESHOLD else 0


def participates(pv: PredictionVector) -> bool:
    """Closer to the matching correct cluster than to the incorrect one.

    Strict inequality: ties exclude, and an empty correct cluster (distance
    +inf) can never win.
    """
    if binarize(pv.rho) == 0:
        return pv.distances.d00 < pv.distances.d01
    return pv.distances.d11 < pv.distances.d10


def confidence_distance(pv: PredictionVector) -> float:
    """Distance to the correct-prediction cluster for the model's own class."""
    return pv.distances.d00 if binarize(pv.rho) == 0 else pv.distances.d11


def idw_weights(distances: Sequence[float]) -> list[float]:
    """Normalized reciprocal-distance weights; smaller distance, larger weight.

    Distances are floored at 1e-9 so an exact centroid hit stays finite while
    still dominating.
    """
    if len(distances) == 0:
        raise EmptyInputError("cannot weight an empty participant list")
    for d in distances:
        if math.isnan(d) or math.isinf(d) or d < 0:
            raise InvalidParamsError(f"distances must be finite and >= 0, got {d!r}")
    inverses = [1.0 / max(d, DISTANCE_FLOOR) for d in distances]
    total = sum(inverses)
    return [inv / total for inv in inverses]


def consolidate_static(rho_list: Sequence[float]) -> float:
    """Uniform-weight consolidation: the arithmetic mean of all predictions."""
    if len(rho_list) == 0:
        raise EmptyInputError("cannot consolidate an empty prediction list")
    for rho in rho_list:
        if not 0.0 <= rho <= 1.0:
            raise OutOfRangeError(f"rho must lie in [0, 1], got {rho!r}")
    return sum(rho_list) / len(rho_list)


def consolidate_dynamic(pvs: Sequence[PredictionVector], expected_model_count: int) -> ConsolidationResult:
    """Contention then weighted consolidation for one patient's group.

    Participants are selected per ``participates``; their predictions combine
    under normalized inverse confidence distances. An empty participant set
    falls back to the static mean over every model so each patient always
    gets a prediction.
    """
    if len(pvs) == 0:
        raise EmptyInputError("cannot consolidate an empty group")
    patient_ids = {pv.patient_id for pv in pvs}
    if len(patient_ids) != 1:
        raise MixedPatientIdsError(f"group mixes patient ids {sorted(patient_ids)}")
    model_ids = [pv.model_id for pv in pvs]
    if len(set(model_ids)) != len(model_ids):
        dupes = sorted({m for m in model_ids if model_ids.count(m) > 1})
        raise DuplicateModelError(f"group repeats model(s) {', '.join(dupes)}")
    if len(pvs) != expected_model_count:
        raise IncompleteGroupError(
            f"group has {len(pvs)} prediction vectors, expected {expected_model_count}"
        )
    patient_id = pvs[0].patient_id
    # canonical model-id order keeps float accumulation permutation-invariant
    ordered = sorted(pvs, key=lambda pv: pv.model_id)
    participants = [pv for pv in ordered if participates(pv)]
    if participants:
        weights = idw_weights([confidence_distance(pv) for pv in participants])
        final_rho = sum(w * pv.rho for w, pv in zip(weights, participants))
        weight_map = {pv.model_id: w for pv, w in zip(participants, weights)}
        participating = frozenset(pv.model_id for pv in participants)
        mode = MODE_DYNAMIC
    else:
        final_rho = consolidate_static([pv.rho for pv in ordered])
        weight_map = {pv.model_id: 1.0 / len(ordered) for pv in ordered}
        participating = frozenset()
        mode = MODE_DYNAMIC_FALLBACK
    final_rho = min(1.0, max(0.0, final_rho))  # guard float drift off the hull
    return ConsolidationResult(
        patient_id=patient_id,
        final_rho=final_rho,
        predicted_class=binarize(final_rho),
        participating=participating,
        weights=weight_map,
        mode=mode,
    )


def efficiency(predicted: Sequence[int], actual: Sequence[int]) -> float:
    """Fraction of records whose class was predicted correctly."""
    if len(predicted) != len(actual):
        raise LengthMismatchError(f"{len(predicted)} predictions vs {len(actual)} actuals")
    if len(predicted) == 0:
        raise EmptyInputError("cannot score an empty prediction list")
    hits = sum(1 for p, a in zip(predicted, actual) if p == a)
    return hits / len(predicted)
