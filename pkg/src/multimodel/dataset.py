"""Cohort CSV ingestion, categorical encoding, splitting, and min-max scaling."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadValueError,
    DimensionMismatchError,
    EmptyDatasetError,
    InvalidParamsError,
    MissingColumnError,
)


@dataclass(frozen=True)
class PatientRecord:
    """One cohort row: opaque id, encoded (unscaled) features, binary label.

    The label is None only for records parsed at predict time from a CSV
    without the label column.
    """

    id: str
    features: tuple[float, ...]
    label: int | None


@dataclass(frozen=True)
class DatasetSchema:
    """Column roster plus the encodings applied while parsing.

    ``columns`` lists every column in file order, including the id and label
    columns. ``categorical`` maps a column name to its value -> real encoding;
    ``label_map`` maps the raw label strings onto {0, 1} and must be a
    bijection.
    """

    columns: tuple[str, ...]
    id_column: str
    label_column: str
    categorical: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    label_map: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise InvalidParamsError("schema columns must be unique")
        for col in (self.id_column, self.label_column):
            if col not in self.columns:
                raise InvalidParamsError(f"schema column {col!r} not in column list")
        if self.id_column == self.label_column:
            raise InvalidParamsError("id and label columns must differ")
        if sorted(self.label_map.values()) != [0, 1]:
            raise InvalidParamsError("label_map must be a bijection onto {0, 1}")
        for col, mapping in self.categorical.items():
            if col not in self.feature_columns:
                raise InvalidParamsError(f"categorical column {col!r} is not a feature column")
            if not mapping:
                raise InvalidParamsError(f"categorical map for {col!r} is empty")
            if len(set(mapping.values())) != len(mapping):
                raise InvalidParamsError(f"categorical map for {col!r} is not invertible")

    @property
    def feature_columns(self) -> tuple[str, ...]:
        return tuple(c for c in self.columns if c not in (self.id_column, self.label_column))

    @property
    def feature_count(self) -> int:
        return len(self.feature_columns)

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "id_column": self.id_column,
            "label_column": self.label_column,
            "categorical": {c: dict(m) for c, m in self.categorical.items()},
            "label_map": dict(self.label_map),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DatasetSchema":
        try:
            return cls(
                columns=tuple(doc["columns"]),
                id_column=doc["id_column"],
                label_column=doc["label_column"],
                categorical={c: {k: float(v) for k, v in m.items()} for c, m in doc.get("categorical", {}).items()},
                label_map={k: int(v) for k, v in doc["label_map"].items()},
            )
        except KeyError as exc:
            raise InvalidParamsError(f"schema document missing field {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "DatasetSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_schema() -> DatasetSchema:
    """Schema for the ten-column Framingham-style cohort files."""
    return DatasetSchema(
        columns=("Id", "Sex", "Age", "FRW", "SBP", "DBP", "CHOL", "CIG", "CHD", "Class"),
        id_column="Id",
        label_column="Class",
        categorical={"Sex": {"female": 0.0, "male": 1.0}},
        label_map={"Alive": 0, "Death": 1},
    )


class RowParser:
    """Maps raw CSV rows onto PatientRecords once the header is resolved."""

    def __init__(self, header: Sequence[str], schema: DatasetSchema, require_label: bool):
        names = [h.strip() for h in header]
        if names and names[0].startswith("﻿"):
            names[0] = names[0].lstrip("﻿")
        positions = {name: i for i, name in enumerate(names)}
        self.schema = schema
        self.width = len(names)
        self.has_label = schema.label_column in positions
        required = [c for c in schema.columns if c != schema.label_column or require_label]
        missing = [c for c in required if c not in positions]
        if missing:
            raise MissingColumnError(
                f"header lacks schema column(s) {', '.join(repr(c) for c in missing)}",
                line=1,
                column=missing[0],
            )
        self.id_pos = positions[schema.id_column]
        self.label_pos = positions.get(schema.label_column)
        self.feature_pos = [(c, positions[c]) for c in schema.feature_columns]

    def parse(self, row: Sequence[str], line: int) -> PatientRecord:
        if len(row) != self.width:
            raise BadValueError(
                f"expected {self.width} fields, found {len(row)}", line=line
            )
        cells = [c.strip() for c in row]
        features = []
        for column, pos in self.feature_pos:
            raw = cells[pos]
            if raw == "":
                raise BadValueError("missing value", line=line, column=column)
            encoding = self.schema.categorical.get(column)
            if encoding is not None:
                if raw not in encoding:
                    raise BadValueError(f"unknown categorical value {raw!r}", line=line, column=column)
                features.append(float(encoding[raw]))
                continue
            try:
                value = float(raw)
            except ValueError:
                raise BadValueError(f"unparsable numeric value {raw!r}", line=line, column=column) from None
            if not math.isfinite(value):
                raise BadValueError(f"non-finite value {raw!r}", line=line, column=column)
            features.append(value)
        label = None
        if self.label_pos is not None:
            raw = cells[self.label_pos]
            if raw not in self.schema.label_map:
                raise BadValueError(f"unknown label value {raw!r}", line=line, column=self.schema.label_column)
            label = self.schema.label_map[raw]
        return PatientRecord(id=cells[self.id_pos], features=tuple(features), label=label)


def parse_records(csv_text: str, schema: DatasetSchema, *, require_label: bool = True) -> list[PatientRecord]:
    """Parse a header-first CSV into PatientRecords.

    The header may order columns freely; columns outside the schema are
    ignored. Raises MissingColumnError / BadValueError with the offending
    line and column.
    """
    rows = list(csv.reader(csv_text.splitlines()))
    if not rows:
        raise MissingColumnError("input has no header row", line=1)
    parser = RowParser(rows[0], schema, require_label)
    records = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(cell.strip() == "" for cell in row):
            continue
        records.append(parser.parse(row, line_no))
    return records


def _format_cell(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def records_to_csv(records: Iterable[PatientRecord], schema: DatasetSchema, *, include_label: bool = True) -> str:
    """Render records back to CSV text in schema column order.

    Categorical and label encodings are inverted, so parse -> render -> parse
    round-trips to identical records.
    """
    inverse_cat = {c: {v: k for k, v in m.items()} for c, m in schema.categorical.items()}
    inverse_label = {v: k for k, v in schema.label_map.items()}
    columns = [c for c in schema.columns if include_label or c != schema.label_column]
    lines = [",".join(columns)]
    feature_index = {c: i for i, c in enumerate(schema.feature_columns)}
    for record in records:
        cells = []
        for column in columns:
            if column == schema.id_column:
                cells.append(record.id)
            elif column == schema.label_column:
                if record.label is None:
                    raise InvalidParamsError(f"record {record.id!r} has no label to serialize")
                cells.append(inverse_label[record.label])
            else:
                value = record.features[feature_index[column]]
                if column in inverse_cat:
                    if value not in inverse_cat[column]:
                        raise InvalidParamsError(
                            f"record {record.id!r}: no categorical encoding maps back from {value!r} in {column!r}"
                        )
                    cells.append(inverse_cat[column][value])
                else:
                    cells.append(_format_cell(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def split_records(
    records: Sequence[PatientRecord], train_fraction: float, seed: int
) -> tuple[list[PatientRecord], list[PatientRecord]]:
    """Seeded shuffle followed by a prefix split; |train| = round(fraction * N)."""
    if not records:
        raise EmptyDatasetError("cannot split an empty dataset")
    if not 0.0 < train_fraction < 1.0:
        raise InvalidParamsError(f"train fraction must lie in (0, 1), got {train_fraction}")
    order = np.random.default_rng(seed).permutation(len(records))
    n_train = int(train_fraction * len(records) + 0.5)
    train = [records[i] for i in order[:n_train]]
    test = [records[i] for i in order[n_train:]]
    return train, test


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature min/max fitted on the training split.

    Transforms map each feature onto [0, 1]; out-of-range values clamp and a
    degenerate feature (min == max) maps to 0.5.
    """

    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if len(self.mins) != len(self.maxs):
            raise InvalidParamsError("mins and maxs must have equal length")
        for lo, hi in zip(self.mins, self.maxs):
            if lo > hi:
                raise InvalidParamsError(f"feature min {lo} exceeds max {hi}")

    @property
    def dimension(self) -> int:
        return len(self.mins)

    def transform(self, features: Sequence[float]) -> np.ndarray:
        if len(features) != self.dimension:
            raise DimensionMismatchError(
                f"expected {self.dimension} features, got {len(features)}"
            )
        return self._apply(np.asarray(features, dtype=float))

    def transform_matrix(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"expected an (n, {self.dimension}) matrix, got shape {matrix.shape}"
            )
        return self._apply(matrix)

    def transform_records(self, records: Sequence[PatientRecord]) -> np.ndarray:
        for record in records:
            if len(record.features) != self.dimension:
                raise DimensionMismatchError(
                    f"record {record.id!r} has {len(record.features)} features, expected {self.dimension}"
                )
        return self._apply(np.array([r.features for r in records], dtype=float))

    def _apply(self, values: np.ndarray) -> np.ndarray:
        mins = np.asarray(self.mins)
        spans = np.asarray(self.maxs) - mins
        degenerate = spans == 0.0
        safe_spans = np.where(degenerate, 1.0, spans)
        scaled = np.clip((values - mins) / safe_spans, 0.0, 1.0)
        return np.where(degenerate, 0.5, scaled)


def fit_scaler(train: Sequence[PatientRecord]) -> FeatureScaler:
    """Fit per-feature min/max over the training split only."""
    if not train:
        raise EmptyDatasetError("cannot fit a scaler on an empty dataset")
    matrix = np.array([r.features for r in train], dtype=float)
    return FeatureScaler(
        mins=tuple(float(v) for v in matrix.min(axis=0)),
        maxs=tuple(float(v) for v in matrix.max(axis=0)),
    )


def feature_matrix(records: Sequence[PatientRecord]) -> np.ndarray:
    return np.array([r.features for r in records], dtype=float)


def labels(records: Sequence[PatientRecord]) -> np.ndarray:
    out = []
    for record in records:
        if record.label is None:
            raise InvalidParamsError(f"record {record.id!r} has no label")
        out.append(record.label)
    return np.array(out, dtype=int)
