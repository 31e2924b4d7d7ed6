from __future__ import annotations

import gzip
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

try:
    import mlflow
    from mlflow.exceptions import MlflowException
except ModuleNotFoundError:  # pragma: no cover - optional dependency
    mlflow = None
    MlflowException = RuntimeError

from bobw_lab.schemas import RunArtifact

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s %(levelname)s %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)

logger = logging.getLogger(__name__)

DEFAULT_EXPERIMENT_NAME = "bobw-lab"
ARTIFACT_COMPRESS_THRESHOLD = int(os.getenv("MLFLOW_ARTIFACT_COMPRESS_THRESHOLD", "200000"))
ARTIFACT_FILES = ("artifact.json", "regret.csv", "timing.json")


class RunCreationError(RuntimeError):
    """Raised when the MLflow run could not be started."""


class ArtifactLoggingError(RuntimeError):
    """Raised when artifacts fail to upload to MLflow."""


@dataclass
class LoggedRunInfo:
    run_id: str
    run_url: str
    experiment_id: str


@dataclass
class MlflowSetup:
    experiment_id: str
    tracking_uri: str


def log_experiment_run(artifact: RunArtifact, artifact_dir: Path) -> LoggedRunInfo | None:
    """Log a finished experiment (params, checkpointed regret, diagnostics, files) to MLflow."""

    setup = _configure_mlflow()
    if setup is None:
        logger.warning("MLflow not configured; skipping logging for run %s", artifact.run_name)
        return None

    params = _build_params(artifact)
    final_metrics = _build_final_metrics(artifact)
    try:
        with mlflow.start_run(run_name=artifact.run_name, tags={"algorithm": artifact.config.algorithm.value}) \
                as active_run:
            _log_params_with_retry(params)
            _log_metrics_with_retry(final_metrics)
            for t, value, expected in zip(artifact.checkpoints, artifact.aggregate.mean,
                                          artifact.aggregate.expected_mean):
                _log_metrics_with_retry({"mean_regret": value, "mean_expected_regret": expected}, step=t)
            for name in ARTIFACT_FILES:
                path = Path(artifact_dir) / name
                if path.exists():
                    _log_text_or_compressed(path.read_text(encoding="utf-8"), f"run/{name}", compressible=True)

            run_url = _build_run_url(setup.tracking_uri, setup.experiment_id, active_run.info.run_id)
            mlflow.set_tag("mlflow.run_url", run_url)
            logger.info("Logged MLflow run for %s mlflow_run_id=%s", artifact.run_name, active_run.info.run_id)
            return LoggedRunInfo(run_id=active_run.info.run_id, run_url=run_url, experiment_id=setup.experiment_id)
    except MlflowException as exc:
        logger.exception("Failed to start/log MLflow run for %s", artifact.run_name)
        raise RunCreationError(str(exc)) from exc
    except ArtifactLoggingError as exc:
        logger.exception("Artifact logging failed for %s: %s", artifact.run_name, exc)
        return None


def _build_params(artifact: RunArtifact) -> dict[str, Any]:
    config = artifact.config
    params: dict[str, Any] = {
        "algorithm": config.algorithm.value,
        "horizon": config.horizon,
        "replications": config.replications,
        "base_seed": config.base_seed,
        "regime": config.environment.regime,
        "schema_version": artifact.schema_version,
    }
    for key, value in config.overrides.model_dump().items():
        params[f"override_{key}"] = value
    return _clean_mapping(params)


def _build_final_metrics(artifact: RunArtifact) -> dict[str, float]:
    metrics: dict[str, float] = {}
    if artifact.aggregate.mean:
        metrics["final_mean_regret"] = artifact.aggregate.mean[-1]
        metrics["final_q90_regret"] = artifact.aggregate.q90[-1]
    metrics.update(artifact.diagnostics)
    if "wall_clock_seconds" in artifact.timing:
        metrics["wall_clock_seconds"] = artifact.timing["wall_clock_seconds"]
    return metrics


def _log_text_or_compressed(content: str, artifact_rel_path: str, compressible: bool) -> None:
    data = content.encode("utf-8")
    filename = Path(artifact_rel_path).name
    artifact_dir = str(Path(artifact_rel_path).parent)
    use_compression = compressible and len(data) > ARTIFACT_COMPRESS_THRESHOLD
    if use_compression:
        data = gzip.compress(data)
        filename = f"{filename}.gz"
    with tempfile.TemporaryDirectory() as tmpdir:
        temp_path = Path(tmpdir) / filename
        temp_path.write_bytes(data)
        try:
            _retry(lambda: mlflow.log_artifact(str(temp_path), artifact_path=artifact_dir))
        except Exception as exc:
            raise ArtifactLoggingError(str(exc)) from exc


def _log_params_with_retry(params: Mapping[str, Any]) -> None:
    clean = _clean_mapping(params)
    if clean:
        _retry(lambda: mlflow.log_params(clean))


def _log_metrics_with_retry(metrics: Mapping[str, float], *, step: int | None = None) -> None:
    clean = {key: float(value) for key, value in metrics.items() if value is not None}
    if clean:
        _retry(lambda: mlflow.log_metrics(clean, step=step))


def _clean_mapping(mapping: Mapping[str, Any]) -> dict[str, Any]:
    return {key: value for key, value in mapping.items() if value is not None}


def _retry(action: Callable[[], None], attempts: int = 3, base_delay: float = 0.5) -> None:
    for attempt in range(1, attempts + 1):
        try:
            action()
            return
        except Exception:  # pragma: no cover
            if attempt == attempts:
                raise
            time.sleep(base_delay * attempt)


def _build_run_url(tracking_uri: str, experiment_id: str, run_id: str) -> str:
    if tracking_uri.endswith("/"):
        tracking_uri = tracking_uri[:-1]
    return f"{tracking_uri}/#/experiments/{experiment_id}/runs/{run_id}"


def _configure_mlflow() -> MlflowSetup | None:
    tracking_uri = os.getenv("MLFLOW_TRACKING_URI")
    if not tracking_uri:
        return None
    if mlflow is None:
        logger.warning("MLFLOW_TRACKING_URI is set but the 'mlflow' package is not installed")
        return None
    mlflow.set_tracking_uri(tracking_uri)

    experiment_name = os.getenv("MLFLOW_EXPERIMENT_NAME", DEFAULT_EXPERIMENT_NAME)
    try:
        experiment = mlflow.set_experiment(experiment_name)
    except MlflowException as exc:
        logger.error("Unable to set MLflow experiment '%s': %s", experiment_name, exc)
        return None

    resolved_tracking_uri = mlflow.get_tracking_uri()
    logger.info("Using MLflow experiment '%s' (%s) at %s", experiment_name, experiment.experiment_id,
                resolved_tracking_uri)
    return MlflowSetup(experiment_id=experiment.experiment_id, tracking_uri=resolved_tracking_uri)

