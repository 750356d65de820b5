from __future__ import annotations

import argparse
import json
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from src.errors import ConfigError, SkillmixError
from src.harness.artifacts import CURVE_NAME, SUMMARY_NAME, read_curve_csv, read_summary
from src.harness.experiment import ablate, run_experiment
from src.harness.metrics import convergence_step, peak_return
from src.harness.stages import distil_router, retarget_clips
from src.models.experiment import ABLATION_MODES, ExperimentConfig
from src.settings import Settings

logger = logging.getLogger(__name__)

COMMANDS = ("train-expert", "retarget", "train-router", "evaluate", "ablate", "metrics")


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict[str, Any], assignments: Sequence[str]) -> dict[str, Any]:
    """Apply `a.b.c=value` assignments; values parse as JSON, falling back to strings."""

    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"Override {item!r} is not of the form key=value")
        *path, leaf = key.split(".")
        node = data
        for part in path:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Override {item!r}: {part!r} is not a section")
            node = child
        node[leaf] = _parse_value(raw)
    return data


def load_config(args: argparse.Namespace, settings: Settings) -> ExperimentConfig:
    if args.config:
        try:
            data: dict[str, Any] = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"Cannot read experiment config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("Experiment config must be a JSON object")
    else:
        data = settings.experiment()

    apply_overrides(data, args.set)
    for flag in ("env", "skill", "task", "mode"):
        value = getattr(args, flag, None)
        if value is not None:
            data["ablation_mode" if flag == "mode" else flag] = value
    if args.seed is not None:
        data["seeds"] = [args.seed]
    if args.command in {"train-expert", "retarget"}:
        data["task"] = None
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid experiment config: {exc}") from exc


def _metrics(args: argparse.Namespace) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for run_dir in map(Path, args.runs):
        curve = read_curve_csv(run_dir / CURVE_NAME)
        steps = [p.step for p in curve]
        means = [p.mean_return for p in curve]
        entry: dict[str, Any] = {
            "peak_return": peak_return([means]),
            "convergence_step": convergence_step(steps, means, args.tol, args.window),
        }
        summary_path = run_dir / SUMMARY_NAME
        if summary_path.exists():
            record = read_summary(summary_path)
            entry.update(stderr=record.stderr, success=f"{record.successes}/{record.trials}")
        out[str(run_dir)] = entry
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillmix",
        description="Imitation-trained skill experts composed by a distilled router.",
    )
    parser.add_argument("--log-level", default=None, help="Overrides SKILLMIX_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out-dir", default=None, help="Defaults to SKILLMIX_OUT_ROOT/<command>")
        if name == "metrics":
            p.add_argument("runs", nargs="+", help="Run directories holding curve.csv")
            p.add_argument("--tol", type=float, default=0.05)
            p.add_argument("--window", type=int, default=3)
            continue
        p.add_argument("--config", default=None, help="Experiment JSON file")
        p.add_argument("--seed", type=int, default=None, help="Run a single seed")
        p.add_argument("--env", default=None)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        if name in {"train-expert", "retarget"}:
            p.add_argument("--skill", default=None)
        if name in {"train-router", "evaluate", "ablate"}:
            p.add_argument("--task", default=None)
        if name in {"train-expert", "evaluate"}:
            p.add_argument("--mode", choices=ABLATION_MODES, default=None)
        p.add_argument("--workers", type=int, default=None, help="Overrides SKILLMIX_WORKERS")
    return parser


def run(args: argparse.Namespace, settings: Settings) -> dict[str, Any]:
    out_dir = Path(args.out_dir or Path(settings.out_root) / args.command)
    if args.command == "metrics":
        return _metrics(args)

    config = load_config(args, settings)
    workers = args.workers or settings.workers
    if args.command in {"train-expert", "evaluate"}:
        result = run_experiment(config, out_dir, workers, command=args.command)
        return result.record.model_dump(mode="json")
    if args.command == "ablate":
        results = ablate(config, out_dir, workers)
        return {mode: r.record.model_dump(mode="json") for mode, r in results.items()}
    seed = config.seeds[0]
    if args.command == "retarget":
        outcome = retarget_clips(config, seed, out_dir)
        return outcome.report.model_dump(mode="json")
    result_router = distil_router(config, seed, out_dir)
    return {
        "router": str(out_dir / "router.json"),
        "curve": [p.demo_kl for p in result_router.curve],
    }


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = Settings()
    except ValidationError as exc:
        print(f"Invalid SKILLMIX_* settings: {exc}")
        return ConfigError.exit_code
    logging.basicConfig(
        level=args.log_level or settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        output = run(args, settings)
    except SkillmixError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return exc.exit_code
    print(json.dumps(output, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
