from __future__ import annotations

from dataclasses import dataclass, field

from bobw_lab.schemas import ExperimentConfig


@dataclass(slots=True)
class ReplicationJob:
    config: ExperimentConfig
    replication: int
    config_dir: str | None = None

    @property
    def seed(self) -> int:
        return self.config.base_seed + self.replication

    @property
    def label(self) -> str:
        return f"{self.config.run_name}#r{self.replication}"


@dataclass(slots=True)
class ReplicationResult:
    replication: int
    seed: int
    checkpoints: list[int]
    regret: list[float]
    expected_regret: list[float]
    corruption_spent: float = 0.0
    diagnostics: dict[str, float] = field(default_factory=dict)
    wall_clock: float = 0.0
