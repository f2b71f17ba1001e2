"""Streaming prediction pipeline: model bundle, wire protocol, map/reduce.

The mapper loads a bundle and emits one tab-keyed line per (record, model);
the reducer groups lines per patient and runs collection -> contention ->
consolidation -> emission. ``run_local`` chains map, sort, reduce on one
machine and is byte-identical to the in-process path that skips the wire.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .consolidator import (
    ConsolidationResult,
    PredictionVector,
    binarize,
    consolidate_dynamic,
    consolidate_static,
)
from .dataset import DatasetSchema, FeatureScaler, PatientRecord, RowParser
from .error_model import DistanceVector, ErrorClusterSet, distance_vector
from .errors import BadValueError, BundleLoadError, InvalidParamsError
from .learners import TrainedModel, model_from_dict, model_to_dict

BUNDLE_VERSION = 1

BUNDLE_SUFFIX = ".bundle.json"

WIRE_DECIMALS = 9

MODE_INCOMPLETE = "incomplete"


def format_wire_float(value: float) -> str:
    """Fixed 9-decimal rendering; +inf becomes the literal ``inf``."""
    if math.isinf(value):
        return "inf"
    return f"{value:.{WIRE_DECIMALS}f}"


def quantize(value: float) -> float:
    """The float that survives a trip through the wire encoding."""
    if math.isinf(value):
        return value
    return float(format_wire_float(value))


@dataclass(frozen=True)
class WireLine:
    """One mapper emission: patient key, model id, distances, rho."""

    key: str
    model_id: str
    distances: DistanceVector
    rho: float

    def format(self) -> str:
        d = self.distances
        value = ",".join(
            [self.model_id]
            + [format_wire_float(v) for v in (d.d00, d.d01, d.d10, d.d11, self.rho)]
        )
        return f"{self.key}\t{value}"

    @classmethod
    def parse(cls, line: str) -> "WireLine":
        key, sep, value = line.partition("\t")
        if not sep:
            raise BadValueError(f"wire line lacks a tab separator: {line!r}")
        fields = value.split(",")
        if len(fields) != 6:
            raise BadValueError(f"wire value must have 6 comma-separated fields: {value!r}")
        model_id = fields[0]
        try:
            numbers = [float(f) for f in fields[1:]]
        except ValueError:
            raise BadValueError(f"unparsable wire number in {value!r}") from None
        if any(math.isnan(v) for v in numbers):
            raise BadValueError(f"NaN is not a valid wire value: {value!r}")
        return cls(
            key=key,
            model_id=model_id,
            distances=DistanceVector(*numbers[:4]),
            rho=numbers[4],
        )


@dataclass(frozen=True)
class ModelBundle:
    """Deployable artifact: schema, scaler, trained roster, error clusters."""

    schema: DatasetSchema
    scaler: FeatureScaler
    models: tuple[TrainedModel, ...]
    clusters: tuple[ErrorClusterSet, ...]
    version: int = BUNDLE_VERSION

    def __post_init__(self):
        if len(self.models) != len(self.clusters):
            raise InvalidParamsError(
                f"{len(self.models)} models but {len(self.clusters)} error cluster sets"
            )
        ids = [m.spec.model_id for m in self.models]
        if ids != sorted(ids):
            raise InvalidParamsError("bundle models must be sorted by model id")
        if len(set(ids)) != len(ids):
            raise InvalidParamsError("bundle model ids must be unique")
        for model, clusters in zip(self.models, self.clusters):
            if model.spec.model_id != clusters.model_id:
                raise InvalidParamsError(
                    f"model {model.spec.model_id!r} paired with clusters for {clusters.model_id!r}"
                )

    @property
    def expected_model_count(self) -> int:
        return len(self.models)


def bundle_to_json(bundle: ModelBundle) -> str:
    """Canonical serialization: sorted keys, compact separators, LF-terminated."""
    doc = {
        "version": bundle.version,
        "schema": bundle.schema.to_dict(),
        "scaler": {"mins": list(bundle.scaler.mins), "maxs": list(bundle.scaler.maxs)},
        "models": [model_to_dict(m) for m in bundle.models],
        "error_clusters": [
            {
                "model_id": c.model_id,
                "dimension": c.dimension,
                "centroids": {cat: (list(v) if v is not None else None) for cat, v in c.centroids.items()},
                "counts": dict(c.counts),
            }
            for c in bundle.clusters
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def bundle_from_json(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleLoadError(f"bundle is not valid JSON: {exc}") from exc
    try:
        version = doc["version"]
        if version != BUNDLE_VERSION:
            raise BundleLoadError(f"unsupported bundle version {version!r}")
        schema = DatasetSchema.from_dict(doc["schema"])
        scaler = FeatureScaler(
            mins=tuple(float(v) for v in doc["scaler"]["mins"]),
            maxs=tuple(float(v) for v in doc["scaler"]["maxs"]),
        )
        models = tuple(model_from_dict(m) for m in doc["models"])
        clusters = tuple(
            ErrorClusterSet(
                model_id=c["model_id"],
                dimension=int(c["dimension"]),
                centroids={cat: (tuple(v) if v is not None else None) for cat, v in c["centroids"].items()},
                counts={cat: int(n) for cat, n in c["counts"].items()},
            )
            for c in doc["error_clusters"]
        )
    except BundleLoadError:
        raise
    except Exception as exc:
        raise BundleLoadError(f"malformed bundle document: {exc}") from exc
    try:
        return ModelBundle(schema=schema, scaler=scaler, models=models, clusters=clusters, version=version)
    except InvalidParamsError as exc:
        raise BundleLoadError(f"inconsistent bundle: {exc}") from exc


def save_bundle(bundle: ModelBundle, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(bundle_to_json(bundle).encode("ascii"))
    return path


def load_bundle(path: str | Path) -> ModelBundle:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except OSError as exc:
        raise BundleLoadError(f"cannot read bundle {path}: {exc}") from exc
    return bundle_from_json(text)


def _diagnostic(stream: IO[str] | None, level: str, message: str) -> None:
    if stream is not None:
        stream.write(f"{level}: {message}\n")


def assign_keys(records: Iterable[PatientRecord]) -> Iterator[tuple[str, PatientRecord]]:
    """Reduce keys for records: repeated ids get an occurrence ordinal.

    The first occurrence keeps the bare id; later ones become ``id#2``,
    ``id#3`` ... so every reduce group stays unique.
    """
    occurrences: dict[str, int] = {}
    for record in records:
        occurrences[record.id] = occurrences.get(record.id, 0) + 1
        n = occurrences[record.id]
        yield (record.id if n == 1 else f"{record.id}#{n}"), record


def _keyed_records(
    lines: Iterable[str],
    schema: DatasetSchema,
    *,
    error_stream: IO[str] | None = None,
) -> Iterator[tuple[str, PatientRecord]]:
    """Parse CSV lines into (reduce key, record) pairs.

    Malformed rows are reported to the error stream and skipped.
    """

    def parsed() -> Iterator[PatientRecord]:
        stripped = (line.rstrip("\r\n") for line in lines)
        rows = csv.reader(stripped)
        parser = None
        for line_no, row in enumerate(rows, start=1):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if parser is None:
                parser = RowParser(row, schema, require_label=False)
                continue
            try:
                record = parser.parse(row, line_no)
            except BadValueError as exc:
                _diagnostic(error_stream, "ERROR", str(exc))
                continue
            if "\t" in record.id or "\n" in record.id:
                _diagnostic(error_stream, "ERROR", f"line {line_no}: patient id contains tab or newline")
                continue
            yield record

    yield from assign_keys(parsed())


def _record_lines(bundle: ModelBundle, key: str, record: PatientRecord) -> list[str]:
    """All wire lines for one record, in roster order."""
    scaled = bundle.scaler.transform(record.features)
    lines = []
    for model, clusters in zip(bundle.models, bundle.clusters):
        rho = model.predict(scaled)
        dv = distance_vector(clusters, scaled)
        lines.append(
            WireLine(key=key, model_id=model.spec.model_id, distances=dv, rho=rho).format()
        )
    return lines


def map_stage(
    lines: Iterable[str],
    bundle: ModelBundle,
    *,
    error_stream: IO[str] | None = None,
) -> Iterator[str]:
    """Emit expected-model-count wire lines per parseable input record.

    Emission order is input order crossed with roster order. Bad rows go to
    the error stream; processing continues.
    """
    for key, record in _keyed_records(lines, bundle.schema, error_stream=error_stream):
        yield from _record_lines(bundle, key, record)


@dataclass
class ReduceStats:
    """Instrumentation for the reducer's collection dictionary."""

    max_resident_groups: int = 0
    groups_out: int = 0
    incomplete_groups: int = 0
    duplicate_lines: int = 0


def _group_vectors(key: str, lines: Sequence[WireLine], error_stream, stats: ReduceStats) -> list[PredictionVector]:
    vectors: list[PredictionVector] = []
    seen: set[str] = set()
    for wl in lines:
        if wl.model_id in seen:
            stats.duplicate_lines += 1
            _diagnostic(error_stream, "ERROR", f"patient {key!r}: duplicate model {wl.model_id!r} skipped")
            continue
        seen.add(wl.model_id)
        vectors.append(
            PredictionVector(patient_id=key, model_id=wl.model_id, distances=wl.distances, rho=wl.rho)
        )
    return vectors


def _emit_group(
    key: str,
    vectors: list[PredictionVector],
    expected_model_count: int,
    error_stream,
    stats: ReduceStats,
) -> str:
    if len(vectors) == expected_model_count:
        result = consolidate_dynamic(vectors, expected_model_count)
        rho, cls, mode = result.final_rho, result.predicted_class, result.mode
    else:
        stats.incomplete_groups += 1
        _diagnostic(
            error_stream,
            "WARN",
            f"patient {key!r}: {len(vectors)} of {expected_model_count} models present, "
            "falling back to static mean",
        )
        rho = consolidate_static([pv.rho for pv in vectors])
        cls = binarize(min(1.0, max(0.0, rho)))
        mode = MODE_INCOMPLETE
    stats.groups_out += 1
    return f"{key},{format_wire_float(rho)},{cls},{mode}"


def reduce_stage(
    lines: Iterable[str],
    expected_model_count: int,
    *,
    error_stream: IO[str] | None = None,
    stats: ReduceStats | None = None,
) -> Iterator[str]:
    """Collect key-contiguous wire lines, consolidate, emit one line per patient.

    A group is finalized as soon as it holds the expected model count; the
    collection dictionary therefore never holds more than the current
    patient. Short groups are flushed with a static fallback and flagged
    ``incomplete``; lines for an already-emitted key are reported and dropped.
    """
    stats = stats if stats is not None else ReduceStats()
    pending: dict[str, list[WireLine]] = {}
    finalized: str | None = None

    def flush(key: str) -> str:
        buffered = pending.pop(key)
        vectors = _group_vectors(key, buffered, error_stream, stats)
        return _emit_group(key, vectors, expected_model_count, error_stream, stats)

    for raw in lines:
        line = raw.rstrip("\r\n")
        if not line:
            continue
        wl = WireLine.parse(line)
        if wl.key == finalized:
            stats.duplicate_lines += 1
            _diagnostic(
                error_stream, "ERROR", f"patient {wl.key!r}: line after group was emitted, skipped"
            )
            continue
        for stale in [k for k in pending if k != wl.key]:
            yield flush(stale)
        pending.setdefault(wl.key, []).append(wl)
        stats.max_resident_groups = max(stats.max_resident_groups, len(pending))
        group = pending[wl.key]
        if len({w.model_id for w in group}) >= expected_model_count:
            yield flush(wl.key)
            finalized = wl.key
    for stale in list(pending):
        yield flush(stale)


def sort_wire_lines(lines: Iterable[str]) -> list[str]:
    """Lexicographic by key, ties broken by the full line."""
    return sorted(lines, key=lambda line: (line.partition("\t")[0], line))


def result_line(key: str, result: ConsolidationResult) -> str:
    return f"{key},{format_wire_float(result.final_rho)},{result.predicted_class},{result.mode}"


def consolidate_records(
    records_with_keys: Iterable[tuple[str, PatientRecord]],
    bundle: ModelBundle,
) -> list[tuple[str, ConsolidationResult]]:
    """In-process reference path: same quantization as the wire, no serialization."""
    out = []
    for key, record in records_with_keys:
        scaled = bundle.scaler.transform(record.features)
        vectors = []
        for model, clusters in zip(bundle.models, bundle.clusters):
            rho = quantize(model.predict(scaled))
            dv = distance_vector(clusters, scaled)
            qdv = DistanceVector(*(quantize(d) for d in dv.as_tuple()))
            vectors.append(
                PredictionVector(patient_id=key, model_id=model.spec.model_id, distances=qdv, rho=rho)
            )
        out.append((key, consolidate_dynamic(vectors, bundle.expected_model_count)))
    return out


def run_in_process(
    dataset_path: str | Path,
    bundle_path: str | Path,
    *,
    error_stream: IO[str] | None = None,
) -> str:
    """Reference output text for ``run_local``, skipping the wire entirely."""
    bundle = load_bundle(bundle_path)
    lines = Path(dataset_path).read_text(encoding="utf-8").splitlines()
    keyed = _keyed_records(lines, bundle.schema, error_stream=error_stream)
    results = consolidate_records(keyed, bundle)
    results.sort(key=lambda kr: kr[0])
    return "".join(result_line(key, result) + "\n" for key, result in results)


def run_local(
    dataset_path: str | Path,
    bundle_path: str | Path,
    output_path: str | Path,
    *,
    workers: int = 1,
    error_stream: IO[str] | None = None,
) -> int:
    """map -> sort -> reduce on one machine; returns the prediction count.

    Output bytes are independent of ``workers``: parallel mapping preserves
    input order before the sort.
    """
    if workers < 1:
        raise InvalidParamsError(f"workers must be >= 1, got {workers}")
    bundle = load_bundle(bundle_path)
    lines = Path(dataset_path).read_text(encoding="utf-8").splitlines()
    keyed = list(_keyed_records(lines, bundle.schema, error_stream=error_stream))
    if workers == 1:
        wire_lines = [line for key, record in keyed for line in _record_lines(bundle, key, record)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_record = pool.map(lambda kr: _record_lines(bundle, kr[0], kr[1]), keyed)
            wire_lines = [line for lines_ in per_record for line in lines_]
    stats = ReduceStats()
    output = list(
        reduce_stage(
            sort_wire_lines(wire_lines),
            bundle.expected_model_count,
            error_stream=error_stream,
            stats=stats,
        )
    )
    Path(output_path).write_text("".join(line + "\n" for line in output), encoding="utf-8")
    return stats.groups_out
