"""Command-line surface: train a bundle, evaluate, and run streaming stages.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import click
import numpy as np

from . import consolidator, pipeline
from .dataset import (
    DatasetSchema,
    PatientRecord,
    default_schema,
    fit_scaler,
    parse_records,
    records_to_csv,
    split_records,
)
from .error_model import build_error_clusters
from .errors import InvalidParamsError, PipelineError
from .learners import build_roster, default_roster_config, train_model
from .pipeline import ModelBundle, load_bundle, save_bundle
from .synth import generate_framingham, generate_regional, framingham_schema, regional_schema

BUNDLE_FILENAME = "model" + pipeline.BUNDLE_SUFFIX

BUNDLE_ENV_VAR = "MODEL_BUNDLE"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a training run needs; JSON-loadable with flag overrides."""

    dataset: Path
    out_dir: Path
    schema: Path | None = None
    roster: Path | None = None
    split_fraction: float = 0.75
    seed: int = 17
    out_of_fold: bool = False

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise InvalidParamsError(
                f"split fraction must lie in (0, 1), got {self.split_fraction}"
            )


def _merge_config(config_path, **overrides) -> ExperimentConfig:
    doc = {}
    if config_path is not None:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    merged = dict(doc)
    for name, value in overrides.items():
        if value is not None:
            merged[name] = value
    try:
        dataset = Path(merged["dataset"])
        out_dir = Path(merged["out_dir"])
    except KeyError as exc:
        raise InvalidParamsError(f"missing required setting {exc} (flag or config file)") from exc
    return ExperimentConfig(
        dataset=dataset,
        out_dir=out_dir,
        schema=Path(merged["schema"]) if merged.get("schema") else None,
        roster=Path(merged["roster"]) if merged.get("roster") else None,
        split_fraction=float(merged.get("split_fraction", 0.75)),
        seed=int(merged.get("seed", 17)),
        out_of_fold=bool(merged.get("out_of_fold", False)),
    )


def train_bundle(
    records: Sequence[PatientRecord],
    roster_config: dict,
    *,
    split_fraction: float = 0.75,
    seed: int = 17,
    out_of_fold: bool = False,
    schema: DatasetSchema | None = None,
) -> tuple[ModelBundle, list[PatientRecord], list[PatientRecord]]:
    """Split, scale, fit the roster, and build error clusters."""
    train, test = split_records(records, split_fraction, seed)
    scaler = fit_scaler(train)
    specs = build_roster(roster_config)
    models = tuple(train_model(spec, train, scaler) for spec in specs)
    clusters = tuple(
        build_error_clusters(model, train, scaler, out_of_fold=out_of_fold) for model in models
    )
    bundle = ModelBundle(
        schema=schema if schema is not None else default_schema(),
        scaler=scaler,
        models=models,
        clusters=clusters,
    )
    return bundle, train, test


@dataclass(frozen=True)
class ComparisonReport:
    """Per-model and consolidated efficiencies plus participation statistics.

    Efficiencies are stored rounded to four decimals so the text (two-decimal
    percentage) and JSON views render the same numbers.
    """

    test_size: int
    per_model: dict[str, float]
    best_model_id: str
    best_model_efficiency: float
    static_efficiency: float
    dynamic_efficiency: float
    participants_mean: float
    participants_min: int
    participants_max: int
    fallback_count: int

    def to_json_dict(self) -> dict:
        return {
            "test_size": self.test_size,
            "per_model": dict(sorted(self.per_model.items())),
            "best_model": {"model_id": self.best_model_id, "efficiency": self.best_model_efficiency},
            "static": {"efficiency": self.static_efficiency},
            "dynamic": {"efficiency": self.dynamic_efficiency},
            "participation": {
                "mean": self.participants_mean,
                "min": self.participants_min,
                "max": self.participants_max,
                "fallback_count": self.fallback_count,
            },
        }

    def render_text(self) -> str:
        lines = [f"Per-model efficiency on {self.test_size} test records:"]
        for model_id, eff in sorted(self.per_model.items()):
            lines.append(f"  {model_id:<24} {_pct(eff)}")
        lines.append("")
        lines.append("Consolidated comparison:")
        lines.append(f"  best single model        {_pct(self.best_model_efficiency)}  ({self.best_model_id})")
        lines.append(f"  static weights           {_pct(self.static_efficiency)}")
        lines.append(f"  dynamic weights          {_pct(self.dynamic_efficiency)}")
        lines.append("")
        lines.append(
            "Participation: mean "
            f"{self.participants_mean:.2f}, min {self.participants_min}, "
            f"max {self.participants_max}, fallback {self.fallback_count}/{self.test_size}"
        )
        return "\n".join(lines) + "\n"


def _pct(efficiency: float) -> str:
    return f"{efficiency * 100:.2f}%"


def _round4(value: float) -> float:
    return float(f"{value:.4f}")


def build_report(bundle: ModelBundle, records: Sequence[PatientRecord]) -> ComparisonReport:
    """Score every roster model, the static mean, and the dynamic consolidation."""
    if any(r.label is None for r in records):
        raise InvalidParamsError("evaluation records must carry labels")
    actual = [r.label for r in records]
    X = bundle.scaler.transform_records(records)
    rho_rows = {m.spec.model_id: m.predict_many(X) for m in bundle.models}

    per_model = {}
    for model_id, rho in rho_rows.items():
        predicted = [consolidator.binarize(float(v)) for v in rho]
        per_model[model_id] = _round4(consolidator.efficiency(predicted, actual))

    static_predicted = []
    matrix = np.stack([rho_rows[m.spec.model_id] for m in bundle.models])
    for j in range(len(records)):
        rho_m = consolidator.consolidate_static([float(v) for v in matrix[:, j]])
        static_predicted.append(consolidator.binarize(min(1.0, max(0.0, rho_m))))

    keyed = list(pipeline.assign_keys(records))
    results = pipeline.consolidate_records(keyed, bundle)
    dynamic_predicted = [result.predicted_class for _, result in results]
    participant_counts = [len(result.participating) for _, result in results]
    fallback_count = sum(1 for _, result in results if result.mode != consolidator.MODE_DYNAMIC)

    best_model_id, best_eff = min(
        per_model.items(), key=lambda item: (-item[1], item[0])
    )
    return ComparisonReport(
        test_size=len(records),
        per_model=per_model,
        best_model_id=best_model_id,
        best_model_efficiency=best_eff,
        static_efficiency=_round4(consolidator.efficiency(static_predicted, actual)),
        dynamic_efficiency=_round4(consolidator.efficiency(dynamic_predicted, actual)),
        participants_mean=round(sum(participant_counts) / len(records), 2),
        participants_min=min(participant_counts),
        participants_max=max(participant_counts),
        fallback_count=fallback_count,
    )


def _fail(message: str) -> "NoReturn":  # noqa: F821 - typing comment only
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load_schema(path: Path | None) -> DatasetSchema:
    if path is None:
        return default_schema()
    if not Path(path).exists():
        raise InvalidParamsError(f"schema file not found: {path}")
    return DatasetSchema.from_file(path)


def _load_roster_config(path: Path | None) -> dict:
    if path is None:
        return default_roster_config()
    if not Path(path).exists():
        raise InvalidParamsError(f"roster config file not found: {path}")
    return json.loads(Path(path).read_text(encoding="utf-8"))


@click.group()
def main():
    """Multi-model prediction pipeline with error-cluster contention."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config; flags override its fields.")
@click.option("--dataset", type=click.Path(), default=None, help="Training CSV (header row required).")
@click.option("--schema", type=click.Path(), default=None, help="Schema JSON; defaults to the built-in Framingham-style schema.")
@click.option("--roster", type=click.Path(), default=None, help="Roster config JSON; defaults to the built-in 25-model roster.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory for bundle and split files.")
@click.option("--split-fraction", type=float, default=None, show_default="0.75")
@click.option("--seed", type=int, default=None, show_default="17")
@click.option("--out-of-fold/--in-sample", "out_of_fold", default=None, help="Build error clusters from 5-fold held-out predictions instead of in-sample ones.")
def train(config_path, dataset, schema, roster, out_dir, split_fraction, seed, out_of_fold):
    """Train the roster and write model.bundle.json plus train/test CSVs."""
    try:
        config = _merge_config(
            config_path,
            dataset=dataset,
            schema=schema,
            roster=roster,
            out_dir=out_dir,
            split_fraction=split_fraction,
            seed=seed,
            out_of_fold=out_of_fold,
        )
        schema_obj = _load_schema(config.schema)
        roster_config = _load_roster_config(config.roster)
        if not config.dataset.exists():
            raise InvalidParamsError(f"dataset file not found: {config.dataset}")
        records = parse_records(config.dataset.read_text(encoding="utf-8"), schema_obj)
        bundle, train_recs, test_recs = train_bundle(
            records,
            roster_config,
            split_fraction=config.split_fraction,
            seed=config.seed,
            out_of_fold=config.out_of_fold,
            schema=schema_obj,
        )
        config.out_dir.mkdir(parents=True, exist_ok=True)
        bundle_path = save_bundle(bundle, config.out_dir / BUNDLE_FILENAME)
        (config.out_dir / "train.csv").write_text(records_to_csv(train_recs, schema_obj), encoding="utf-8")
        (config.out_dir / "test.csv").write_text(records_to_csv(test_recs, schema_obj), encoding="utf-8")
    except (PipelineError, OSError, json.JSONDecodeError) as exc:
        _fail(str(exc))
    click.echo(
        f"trained {bundle.expected_model_count} models on {len(train_recs)} records "
        f"({len(test_recs)} held out); bundle: {bundle_path}"
    )


@main.command()
@click.option("--bundle", "bundle_path", type=click.Path(), required=True)
@click.option("--test", "test_path", type=click.Path(), required=True, help="Labelled test CSV.")
@click.option("--json-out", type=click.Path(), default=None, help="Also write the report as JSON.")
def evaluate(bundle_path, test_path, json_out):
    """Compare per-model, static, and dynamic efficiency on a labelled CSV."""
    try:
        bundle = load_bundle(bundle_path)
        records = parse_records(Path(test_path).read_text(encoding="utf-8"), bundle.schema)
        report = build_report(bundle, records)
        if json_out is not None:
            Path(json_out).write_text(
                json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
    except (PipelineError, OSError) as exc:
        _fail(str(exc))
    click.echo(report.render_text(), nl=False)


@main.command("map")
@click.option("--bundle", "bundle_path", type=click.Path(), default=None,
              help=f"Bundle path; falls back to ${BUNDLE_ENV_VAR}.")
def map_cmd(bundle_path):
    """Read record CSV on stdin, write wire lines on stdout.

    Repeated patient ids are keyed with an occurrence ordinal (id#2, id#3 ...)
    so reduce groups stay unique.
    """
    if bundle_path is None:
        bundle_path = os.environ.get(BUNDLE_ENV_VAR)
    if bundle_path is None:
        raise click.UsageError(f"--bundle or ${BUNDLE_ENV_VAR} is required")
    try:
        bundle = load_bundle(bundle_path)
        for line in pipeline.map_stage(sys.stdin, bundle, error_stream=sys.stderr):
            sys.stdout.write(line + "\n")
    except PipelineError as exc:
        _fail(str(exc))


@main.command("reduce")
@click.option("--expected-models", type=int, default=None, help="Configured roster size; wins over --bundle.")
@click.option("--bundle", "bundle_path", type=click.Path(), default=None,
              help=f"Bundle to read the roster size from; falls back to ${BUNDLE_ENV_VAR}.")
def reduce_cmd(expected_models, bundle_path):
    """Read key-sorted wire lines on stdin, write consolidated lines on stdout."""
    if expected_models is None:
        if bundle_path is None:
            bundle_path = os.environ.get(BUNDLE_ENV_VAR)
        if bundle_path is None:
            raise click.UsageError(f"--expected-models, --bundle, or ${BUNDLE_ENV_VAR} is required")
    try:
        if expected_models is None:
            expected_models = load_bundle(bundle_path).expected_model_count
        for line in pipeline.reduce_stage(sys.stdin, expected_models, error_stream=sys.stderr):
            sys.stdout.write(line + "\n")
    except PipelineError as exc:
        _fail(str(exc))


@main.command("run-local")
@click.option("--dataset", type=click.Path(), required=True)
@click.option("--bundle", "bundle_path", type=click.Path(), required=True)
@click.option("--out", "output_path", type=click.Path(), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
def run_local_cmd(dataset, bundle_path, output_path, workers):
    """map -> sort -> reduce locally; output is one line per patient.

    Output lines are `patient_id,final_rho,class,mode`; repeated input ids
    get an occurrence ordinal suffix (id#2, ...).
    """
    try:
        count = pipeline.run_local(
            dataset, bundle_path, output_path, workers=workers, error_stream=sys.stderr
        )
    except (PipelineError, OSError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {count} predictions to {output_path}")


@main.command()
@click.option("--shape", type=click.Choice(["regional", "framingham"]), default="regional", show_default=True)
@click.option("--n", type=int, default=2000, show_default=True)
@click.option("--noise", type=float, default=0.1, show_default=True, help="Label flip rate (regional shape only).")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--schema-out", type=click.Path(), default=None, help="Also write the matching schema JSON.")
def synth(shape, n, noise, seed, out_path, schema_out):
    """Generate a deterministic synthetic cohort CSV."""
    try:
        if shape == "regional":
            text = generate_regional(n, noise, seed)
            schema = regional_schema()
        else:
            text = generate_framingham(n, seed)
            schema = framingham_schema()
        Path(out_path).write_text(text, encoding="utf-8")
        if schema_out is not None:
            Path(schema_out).write_text(
                json.dumps(schema.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
    except (PipelineError, OSError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {n} records to {out_path}")


if __name__ == "__main__":
    main()
