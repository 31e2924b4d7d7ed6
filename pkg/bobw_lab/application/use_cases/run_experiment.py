from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from pydantic import ValidationError

from bobw_lab import audit
from bobw_lab.application.services.simulation import build_pm_learner, prepare, run_replication
from bobw_lab.domain.entities import ReplicationJob, ReplicationResult
from bobw_lab.domain.errors import ConfigurationError, LabError
from bobw_lab.domain.ports import ArtifactStorePort, ReplicationPoolPort, TelemetryPort
from bobw_lab.schemas import AggregateSummary, ExperimentConfig, ReplicationSummary, RunArtifact
from bobw_lab.settings import SolverSettings, get_settings

logger = logging.getLogger(__name__)

PoolFactory = Callable[[int], ReplicationPoolPort]


def parse_config(raw: Mapping[str, Any] | ExperimentConfig) -> ExperimentConfig:
    if isinstance(raw, ExperimentConfig):
        return raw
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors(include_url=False)[0]
        where = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigurationError(
            f"invalid experiment configuration at {where}: {first['msg']}",
            details={"errors": exc.errors(include_url=False)},
        ) from exc


def aggregate(results: list[ReplicationResult]) -> AggregateSummary:
    regret = np.asarray([r.regret for r in results], dtype=float)
    expected = np.asarray([r.expected_regret for r in results], dtype=float)
    q10, q50, q90 = np.quantile(regret, [0.1, 0.5, 0.9], axis=0)
    return AggregateSummary(
        mean=regret.mean(axis=0).tolist(),
        q10=q10.tolist(),
        q50=q50.tolist(),
        q90=q90.tolist(),
        expected_mean=expected.mean(axis=0).tolist(),
    )


def merge_diagnostics(results: list[ReplicationResult]) -> dict[str, float]:
    merged: dict[str, float] = {}
    for result in results:
        for key, value in result.diagnostics.items():
            merged[key] = merged.get(key, 0.0) + float(value)
    merged["corruption_spent_max"] = max((r.corruption_spent for r in results), default=0.0)
    return merged


class RunExperimentUseCase:
    """Validates a configuration, fans replications out, aggregates and persists the run."""

    def __init__(
            self,
            *,
            store: ArtifactStorePort,
            pool_factory: PoolFactory,
            telemetry: TelemetryPort | None = None,
            solver: SolverSettings | None = None,
            handler: Callable[[ReplicationJob], ReplicationResult] = run_replication,
    ) -> None:
        self._store = store
        self._pool_factory = pool_factory
        self._telemetry = telemetry
        self._solver = solver
        self._handler = handler

    def __call__(
            self,
            raw_config: Mapping[str, Any] | ExperimentConfig,
            *,
            out_dir: Path,
            workers: int = 1,
            config_dir: str | None = None,
    ) -> RunArtifact:
        config = parse_config(raw_config)
        # refusals (unreadable game, non-local game for PM-Local) surface before any work starts
        solver = self._solver or get_settings().solver
        prepared = prepare(config, config_dir=config_dir, solver=solver)
        if prepared.analysis is not None:
            build_pm_learner(prepared, solver)

        token = audit.bind_replication(config.run_name)
        started = time.perf_counter()
        try:
            jobs = [ReplicationJob(config=config, replication=r, config_dir=config_dir)
                    for r in range(config.replications)]
            logger.info("starting %s: %d replications of T=%d", config.run_name, len(jobs), config.horizon)
            try:
                results = self._pool_factory(workers).run(self._handler, jobs)
            except LabError:
                raise
            except Exception as exc:
                raise LabError(f"replications of {config.run_name} failed: {exc}") from exc
            results.sort(key=lambda result: result.replication)
            elapsed = time.perf_counter() - started

            artifact = RunArtifact(
                run_name=config.run_name,
                config=config,
                checkpoints=results[0].checkpoints,
                replications=[
                    ReplicationSummary(
                        replication=r.replication,
                        seed=r.seed,
                        regret=r.regret,
                        expected_regret=r.expected_regret,
                        final_regret=r.regret[-1],
                        corruption_spent=r.corruption_spent,
                        diagnostics=r.diagnostics,
                    )
                    for r in results
                ],
                aggregate=aggregate(results),
                diagnostics=merge_diagnostics(results),
                timing={
                    "wall_clock_seconds": elapsed,
                    "replication_seconds_total": float(sum(r.wall_clock for r in results)),
                    "workers": float(workers),
                },
            )
            run_dir = self._store.save_run(artifact, out_dir)
            if self._telemetry is not None:
                self._telemetry.log_experiment_run(artifact=artifact, artifact_dir=run_dir)
            logger.info("finished %s in %.2fs; mean final regret %.4f", config.run_name, elapsed,
                        artifact.aggregate.mean[-1])
            return artifact
        finally:
            audit.reset_replication(token)

