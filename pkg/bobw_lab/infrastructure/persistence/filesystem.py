from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

from pydantic import ValidationError

from bobw_lab.audit import log_run_access
from bobw_lab.domain.errors import ConfigurationError
from bobw_lab.domain.ports import ArtifactStorePort
from bobw_lab.schemas import RunArtifact

logger = logging.getLogger(__name__)

ARTIFACT_FILE = "artifact.json"
REGRET_FILE = "regret.csv"
TIMING_FILE = "timing.json"


def render_artifact(artifact: RunArtifact) -> str:
    payload = artifact.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def render_regret_csv(artifact: RunArtifact) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t", *(f"r{rep.replication}" for rep in artifact.replications), "mean"])
    for i, t in enumerate(artifact.checkpoints):
        row = [t, *(repr(rep.regret[i]) for rep in artifact.replications), repr(artifact.aggregate.mean[i])]
        writer.writerow(row)
    return buffer.getvalue()


class FilesystemArtifactStore(ArtifactStorePort):
    """Writes one directory per run under the output root."""

    def save_run(self, artifact: RunArtifact, out_dir: Path) -> Path:
        run_dir = Path(out_dir) / artifact.run_name
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / ARTIFACT_FILE).write_text(render_artifact(artifact), encoding="utf-8")
        (run_dir / REGRET_FILE).write_text(render_regret_csv(artifact), encoding="utf-8")
        (run_dir / TIMING_FILE).write_text(json.dumps(artifact.timing, sort_keys=True, indent=2) + "\n",
                                           encoding="utf-8")
        log_run_access("write", run_id=artifact.run_name, details={"path": str(run_dir)})
        logger.info("wrote run %s to %s", artifact.run_name, run_dir)
        return run_dir

    def load_artifact(self, path: Path) -> RunArtifact:
        path = Path(path)
        target = path / ARTIFACT_FILE if path.is_dir() else path
        try:
            artifact = RunArtifact.model_validate_json(target.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read run artifact {target}: {exc}") from exc
        except ValidationError as exc:
            raise ConfigurationError(f"{target} is not a valid run artifact: {exc.error_count()} error(s)",
                                     details={"errors": exc.errors(include_url=False)}) from exc
        timing = target.parent / TIMING_FILE
        if timing.exists():
            try:
                artifact.timing = json.loads(timing.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                logger.warning("ignoring unreadable timing file %s", timing)
        log_run_access("read", run_id=artifact.run_name, details={"path": str(target)})
        return artifact
