from __future__ import annotations

import csv
import logging
from collections.abc import Mapping, Sequence
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from src.envs.episodes import SCHEMA_LINE
from src.errors import InputShapeError
from src.experts.training import CurvePoint
from src.harness.metrics import AggregatePoint
from src.models.documents import RejectionReport, RunManifest
from src.models.experiment import ExperimentConfig, MetricsRecord
from src.routing.training import RouterCurvePoint

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["step", "mean_return", "stderr", "n_seeds"]
EXPERT_CURVE_COLUMNS = ["step", "mean_return", "stderr", "task_return", "skill"]
ABLATION_COLUMNS = ["method", "success", "convergence_step", "return", "stderr"]
ROUTER_CURVE_COLUMNS = ["step", "loss", "demo_kl"]

MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.json"
CURVE_NAME = "curve.csv"


def package_version() -> str:
    try:
        return version("skillmix")
    except PackageNotFoundError:
        return "0+unknown"


def _num(x: float) -> str:
    return repr(float(x))


def write_curve_csv(points: Sequence[AggregatePoint], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"{SCHEMA_LINE}\n")
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for p in points:
            writer.writerow([p.step, _num(p.mean_return), _num(p.stderr), p.n_seeds])


def read_curve_csv(path: Path) -> list[AggregatePoint]:
    with path.open(newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith(SCHEMA_LINE):
            raise InputShapeError(f"{path}: missing or unsupported schema line {first!r}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CURVE_COLUMNS:
            raise InputShapeError(f"{path}: unexpected header {header!r}")
        return [
            AggregatePoint(int(row[0]), float(row[1]), float(row[2]), int(row[3]))
            for row in reader
            if row
        ]


def write_expert_curve_csv(points: Sequence[CurvePoint], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"{SCHEMA_LINE}\n")
        writer = csv.writer(fh)
        writer.writerow(EXPERT_CURVE_COLUMNS)
        for p in points:
            writer.writerow(
                [p.step, _num(p.mean_return), _num(p.stderr), _num(p.task_return), p.skill]
            )


def write_summary(record: MetricsRecord, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.model_dump_json(indent=2), encoding="utf-8")


def read_summary(path: Path) -> MetricsRecord:
    return MetricsRecord.model_validate_json(path.read_text(encoding="utf-8"))


# One report per skill so several `retarget` runs can share a directory.
def rejections_path(directory: Path, skill: str) -> Path:
    return directory / f"rejections_{skill}.json"


def reference_path(directory: Path, skill: str, index: int) -> Path:
    return directory / "references" / f"{skill}_{index:02d}.csv"


def write_rejections(report: RejectionReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")


def read_rejections(path: Path) -> RejectionReport:
    return RejectionReport.model_validate_json(path.read_text(encoding="utf-8"))


def write_manifest(
    out_dir: Path,
    command: str,
    config: ExperimentConfig | Mapping[str, object],
    seeds: Sequence[int],
) -> Path:
    """Record what is needed to replay a run: resolved config, seeds and format versions."""

    if isinstance(config, ExperimentConfig):
        resolved = config.model_dump(mode="json")
    else:
        resolved = dict(config)
    manifest = RunManifest(
        package_version=package_version(), command=command, seeds=list(seeds), config=resolved
    )
    path = out_dir / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return path


def write_ablation_table(records: Mapping[str, MetricsRecord], path: Path) -> None:
    """One row per mode: success as k/n, convergence step ("inf" if never), peak return."""

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"{SCHEMA_LINE}\n")
        writer = csv.writer(fh)
        writer.writerow(ABLATION_COLUMNS)
        for mode, rec in records.items():
            conv = "inf" if rec.convergence_step is None else str(rec.convergence_step)
            writer.writerow(
                [
                    mode,
                    f"{rec.successes}/{rec.trials}",
                    conv,
                    _num(rec.peak_return),
                    _num(rec.stderr),
                ]
            )
    logger.info("Wrote ablation table for %d modes to %s", len(records), path)


def write_router_curve_csv(points: Sequence[RouterCurvePoint], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"{SCHEMA_LINE}\n")
        writer = csv.writer(fh)
        writer.writerow(ROUTER_CURVE_COLUMNS)
        for p in points:
            writer.writerow([p.step, _num(p.loss), _num(p.demo_kl)])
