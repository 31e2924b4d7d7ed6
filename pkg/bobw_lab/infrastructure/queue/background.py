from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor

from bobw_lab.domain.entities import ReplicationJob, ReplicationResult
from bobw_lab.domain.ports import ReplicationPoolPort

logger = logging.getLogger(__name__)

Handler = Callable[[ReplicationJob], ReplicationResult]


class InlineReplicationPool(ReplicationPoolPort):
    """Runs replications one after another in the calling process."""

    def run(self, handler: Handler, jobs: Sequence[ReplicationJob]) -> list[ReplicationResult]:
        results = []
        for job in jobs:
            try:
                results.append(handler(job))
            except Exception:
                logger.exception("replication %s failed", job.label)
                raise
        return results


class ProcessReplicationPool(ReplicationPoolPort):
    """Fans replications out to worker processes; ``handler`` must be importable at module level."""

    def __init__(self, workers: int) -> None:
        if workers < 1:
            raise ValueError("workers must be at least 1")
        self._workers = workers

    @property
    def workers(self) -> int:
        return self._workers

    def run(self, handler: Handler, jobs: Sequence[ReplicationJob]) -> list[ReplicationResult]:
        if not jobs:
            return []
        workers = min(self._workers, len(jobs))
        logger.info("running %d replications on %d worker processes", len(jobs), workers)
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(handler, jobs))


def build_pool(workers: int) -> ReplicationPoolPort:
    if workers <= 1:
        return InlineReplicationPool()
    return ProcessReplicationPool(workers)
