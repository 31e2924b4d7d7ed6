from __future__ import annotations

from pathlib import Path

from bobw_lab.audit import log_run_access
from bobw_lab.domain.ports import TelemetryPort
from bobw_lab.mlflow_logging import log_experiment_run, logger
from bobw_lab.schemas import RunArtifact


class MLflowTelemetryAdapter(TelemetryPort):
    """Thin adapter that proxies finished experiments to MLflow."""

    def log_experiment_run(self, *, artifact: RunArtifact, artifact_dir: Path) -> None:
        try:
            log_run_access("log_mlflow", run_id=artifact.run_name)
            log_experiment_run(artifact, artifact_dir)
        except Exception as exc:  # pragma: no cover
            logger.exception("MLflow logging failed for run %s: %s", artifact.run_name, exc)
