"""Command-line entry point: ``analyze-game``, ``run`` and ``slope-check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from dotenv import load_dotenv

from bobw_lab import mlflow_logging  # noqa: F401  installs the process-wide logging format
from bobw_lab.application.services.slope_check import GrowthModel, slope_check
from bobw_lab.container import get_analyze_use_case, get_artifact_store, get_run_use_case
from bobw_lab.domain.errors import EXIT_FAULT, EXIT_REFUSAL, ConfigurationError, LabError
from bobw_lab.settings import get_settings

logger = logging.getLogger(__name__)


def _emit(payload: Any) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n")


def _read_config(path: Path) -> dict[str, Any]:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc.msg}", details={"line": exc.lineno, "column": exc.colno}) from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: an experiment config must be a JSON object")
    return raw


def _analyze_game(args: argparse.Namespace) -> int:
    report = get_analyze_use_case()(Path(args.file), include_estimators=args.estimators)
    _emit(report.model_dump(mode="json"))
    return 0


def _run(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    artifact = get_run_use_case()(
        _read_config(config_path),
        out_dir=Path(args.out),
        workers=args.workers,
        config_dir=str(config_path.parent),
    )
    _emit({
        "run_name": artifact.run_name,
        "run_dir": str(Path(args.out) / artifact.run_name),
        "final_mean_regret": artifact.aggregate.mean[-1],
        "final_q90_regret": artifact.aggregate.q90[-1],
        "diagnostics": artifact.diagnostics,
        "wall_clock_seconds": artifact.timing.get("wall_clock_seconds"),
    })
    return 0


def _slope_check(args: argparse.Namespace) -> int:
    artifact = get_artifact_store().load_artifact(Path(args.artifact))
    if args.replication is None:
        regret = artifact.aggregate.mean
    else:
        chosen = [rep for rep in artifact.replications if rep.replication == args.replication]
        if not chosen:
            raise ConfigurationError(f"run {artifact.run_name} has no replication {args.replication}")
        regret = chosen[0].regret
    report = slope_check(artifact.checkpoints, regret, args.model, span=args.span, replication=args.replication)
    _emit(report.model_dump(mode="json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    runner = get_settings().runner
    parser = argparse.ArgumentParser(prog="bobw-lab", description="Best-of-both-worlds online learning lab.")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze-game", help="Classify a partial-monitoring game file.")
    analyze.add_argument("file", help="JSON game file with 'loss' and 'feedback' matrices.")
    analyze.add_argument("--estimators", action="store_true", help="Include the edge estimator tables.")
    analyze.set_defaults(handler=_analyze_game)

    run = sub.add_parser("run", help="Run an experiment config and write its artifacts.")
    run.add_argument("config", help="JSON experiment config.")
    run.add_argument("--out", default=runner.output_dir, help="Output root (default: %(default)s).")
    run.add_argument("--workers", type=int, default=runner.workers,
                     help="Worker processes for replications (default: %(default)s).")
    run.set_defaults(handler=_run)

    slope = sub.add_parser("slope-check", help="Compare a regret trace against a growth model.")
    slope.add_argument("artifact", help="Run directory or its artifact.json.")
    slope.add_argument("--model", required=True, choices=[m.value for m in GrowthModel])
    slope.add_argument("--span", type=int, default=1,
                       help="Checkpoints back for the reference ratio; 1 compares T/2 with T.")
    slope.add_argument("--replication", type=int, default=None, help="Check one replication instead of the mean.")
    slope.set_defaults(handler=_slope_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except LabError as exc:
        if exc.exit_code == EXIT_REFUSAL:
            logger.error("%s", exc)
        else:
            logger.exception("internal fault: %s", exc)
        sys.stderr.write(json.dumps({"error": str(exc), "kind": type(exc).__name__, "details": exc.details},
                                    sort_keys=True, default=str) + "\n")
        return exc.exit_code
    except Exception as exc:  # pragma: no cover
        logger.exception("unexpected failure: %s", exc)
        sys.stderr.write(json.dumps({"error": str(exc), "kind": type(exc).__name__}) + "\n")
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
