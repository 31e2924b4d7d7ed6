from __future__ import annotations

from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

from bobw_lab.domain.entities import ReplicationJob, ReplicationResult
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.schemas import RunArtifact


@runtime_checkable
class ArtifactStorePort(Protocol):
    def save_run(self, artifact: RunArtifact, out_dir: Path) -> Path:
        """Write artifact.json, regret.csv and timing.json and return the run directory."""

    def load_artifact(self, path: Path) -> RunArtifact:
        """Read a run artifact from a run directory or its artifact.json."""


@runtime_checkable
class ReplicationPoolPort(Protocol):
    def run(
            self,
            handler: Callable[[ReplicationJob], ReplicationResult],
            jobs: Sequence[ReplicationJob],
    ) -> list[ReplicationResult]:
        """Execute every job and return the results in job order."""


@runtime_checkable
class GameSourcePort(Protocol):
    def load(self, path: Path) -> PMGame:
        """Parse a game file."""


@runtime_checkable
class TelemetryPort(Protocol):
    def log_experiment_run(self, *, artifact: RunArtifact, artifact_dir: Path) -> None:
        """Emit telemetry for a finished experiment."""
