from __future__ import annotations

import logging
from functools import lru_cache

from bobw_lab.application.use_cases.analyze_game import AnalyzeGameUseCase
from bobw_lab.application.use_cases.run_experiment import RunExperimentUseCase
from bobw_lab.infrastructure.games.loader import JsonGameLoader
from bobw_lab.infrastructure.persistence.filesystem import FilesystemArtifactStore
from bobw_lab.infrastructure.queue.background import build_pool
from bobw_lab.infrastructure.telemetry.mlflow_adapter import MLflowTelemetryAdapter
from bobw_lab.settings import get_settings

logger = logging.getLogger(__name__)


@lru_cache(maxsize=1)
def get_artifact_store() -> FilesystemArtifactStore:
    return FilesystemArtifactStore()


@lru_cache(maxsize=1)
def get_game_loader() -> JsonGameLoader:
    return JsonGameLoader()


@lru_cache(maxsize=1)
def get_telemetry() -> MLflowTelemetryAdapter | None:
    if not get_settings().telemetry.enabled:
        logger.debug("MLFLOW_TRACKING_URI not set; telemetry disabled")
        return None
    return MLflowTelemetryAdapter()


@lru_cache(maxsize=1)
def get_run_use_case() -> RunExperimentUseCase:
    return RunExperimentUseCase(
        store=get_artifact_store(),
        pool_factory=build_pool,
        telemetry=get_telemetry(),
        solver=get_settings().solver,
    )


@lru_cache(maxsize=1)
def get_analyze_use_case() -> AnalyzeGameUseCase:
    return AnalyzeGameUseCase(source=get_game_loader(), delta=get_settings().solver.lp_delta)
