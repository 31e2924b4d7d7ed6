from __future__ import annotations

import math
from enum import Enum
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, Field, conint, field_validator, model_validator

from bobw_lab.domain.environments import CorruptionMap, LossLaw, ScheduleKind
from bobw_lab.domain.status import Algorithm

SCHEMA_VERSION = "1"


class ActionSetKind(str, Enum):
    MSET = "mset"
    VERTICES = "vertices"


class GameSpec(BaseModel):
    name: str = ""
    loss: list[list[float]] = Field(..., min_length=2)
    feedback: list[list[Annotated[str, Field(min_length=1)]]] = Field(..., min_length=2)

    @model_validator(mode="after")
    def _same_shape(self) -> "GameSpec":
        widths = {len(row) for row in self.loss}
        if len(widths) != 1:
            raise ValueError("loss rows must all have the same length")
        if len(self.feedback) != len(self.loss):
            raise ValueError(f"feedback has {len(self.feedback)} rows, loss has {len(self.loss)}")
        for a, row in enumerate(self.feedback):
            if len(row) != len(self.loss[a]):
                raise ValueError(f"feedback row {a} has {len(row)} entries, expected {len(self.loss[a])}")
        return self


class SemiBanditSpec(BaseModel):
    d: conint(ge=1)
    kind: ActionSetKind = ActionSetKind.MSET
    m: Optional[conint(ge=1)] = None
    vertices: Optional[list[list[int]]] = None

    @model_validator(mode="after")
    def _geometry(self) -> "SemiBanditSpec":
        if self.kind is ActionSetKind.MSET:
            if self.m is None or self.m > self.d:
                raise ValueError("m-set geometry needs 1 <= m <= d")
        else:
            if not self.vertices:
                raise ValueError("explicit geometry needs a nonempty vertex list")
            for vertex in self.vertices:
                if len(vertex) != self.d or any(v not in (0, 1) for v in vertex):
                    raise ValueError("vertices must be 0/1 vectors of length d")
        return self


class _LawFields(BaseModel):
    means: Optional[list[float]] = None
    nu: Optional[list[float]] = None
    law: LossLaw = LossLaw.BERNOULLI
    spread: float = Field(0.0, ge=0.0)

    @field_validator("means", "nu")
    @classmethod
    def _unit_interval(cls, value: Optional[list[float]]) -> Optional[list[float]]:
        if value is None:
            return value
        if any(not math.isfinite(v) or v < 0.0 or v > 1.0 for v in value):
            raise ValueError("entries must lie in [0, 1]")
        return value


class StochasticEnvSpec(_LawFields):
    regime: Literal["stochastic"] = "stochastic"


class AdversarialEnvSpec(BaseModel):
    regime: Literal["adversarial"] = "adversarial"
    schedule: ScheduleKind = ScheduleKind.DOUBLING
    patterns: list[Union[int, list[float]]] = Field(..., min_length=1)


class CorruptedEnvSpec(_LawFields):
    regime: Literal["corrupted"] = "corrupted"
    corruption: CorruptionMap = CorruptionMap.FLIP_TO_WORST
    budget: float = Field(..., ge=0.0)
    target: Optional[conint(ge=0)] = None


EnvironmentSpec = Annotated[
    Union[StochasticEnvSpec, AdversarialEnvSpec, CorruptedEnvSpec],
    Field(discriminator="regime"),
]


class Overrides(BaseModel):
    epsilon: Optional[float] = Field(None, gt=0.0)
    eta: Optional[float] = Field(None, gt=0.0, lt=0.5)
    c1: Optional[float] = Field(None, gt=0.0)
    exo_max_iterations: Optional[conint(ge=1)] = None
    exo_tolerance: Optional[float] = Field(None, gt=0.0)
    exo_patience: Optional[conint(ge=1)] = None


class ExperimentConfig(BaseModel):
    name: Optional[str] = None
    algorithm: Algorithm
    horizon: conint(ge=2)
    replications: conint(ge=1) = 1
    base_seed: conint(ge=0) = 0
    game: Optional[Union[str, GameSpec]] = None
    semibandit: Optional[SemiBanditSpec] = None
    environment: EnvironmentSpec
    overrides: Overrides = Field(default_factory=Overrides)

    @model_validator(mode="after")
    def _compatible(self) -> "ExperimentConfig":
        env = self.environment
        if self.algorithm.is_partial_monitoring:
            if self.game is None:
                raise ValueError(f"{self.algorithm.value} needs a game")
            if self.semibandit is not None:
                raise ValueError("semi-bandit geometry given for a partial-monitoring algorithm")
            if isinstance(env, (StochasticEnvSpec, CorruptedEnvSpec)) and env.nu is None:
                raise ValueError("partial-monitoring environments need an outcome distribution 'nu'")
            if isinstance(env, AdversarialEnvSpec) and not all(isinstance(p, int) for p in env.patterns):
                raise ValueError("partial-monitoring schedules list outcome indices")
        else:
            if self.semibandit is None:
                raise ValueError(f"{self.algorithm.value} needs a semi-bandit geometry")
            if self.game is not None:
                raise ValueError("a game was given for a semi-bandit algorithm")
            if isinstance(env, (StochasticEnvSpec, CorruptedEnvSpec)) and env.means is None:
                raise ValueError("semi-bandit environments need per-arm 'means'")
            if isinstance(env, AdversarialEnvSpec) and not all(isinstance(p, list) for p in env.patterns):
                raise ValueError("semi-bandit schedules list loss vectors")
        if self.algorithm is Algorithm.PM_LOCAL and self.horizon < 8:
            raise ValueError("PM-Local needs a horizon T >= 8 so that log T >= 2")
        return self

    @property
    def run_name(self) -> str:
        base = self.name or self.algorithm.value.lower()
        return f"{base}-T{self.horizon}-seed{self.base_seed}"


class ReplicationSummary(BaseModel):
    replication: int
    seed: int
    regret: list[float]
    expected_regret: list[float]
    final_regret: float
    corruption_spent: float = 0.0
    diagnostics: dict[str, float] = Field(default_factory=dict)


class AggregateSummary(BaseModel):
    mean: list[float]
    q10: list[float]
    q50: list[float]
    q90: list[float]
    expected_mean: list[float]


class RunArtifact(BaseModel):
    schema_version: str = SCHEMA_VERSION
    run_name: str
    config: ExperimentConfig
    checkpoints: list[int]
    replications: list[ReplicationSummary]
    aggregate: AggregateSummary
    diagnostics: dict[str, float] = Field(default_factory=dict)
    timing: dict[str, float] = Field(default_factory=dict, exclude=True)


class EdgeReport(BaseModel):
    edge: tuple[int, int]
    local_residual: Optional[float] = None
    global_residual: Optional[float] = None
    local_estimator: Optional[list[list[float]]] = None
    global_estimator: Optional[list[list[float]]] = None


class GameReport(BaseModel):
    name: str
    k: int
    d: int
    m: int
    symbols: list[str]
    observability: str
    pareto: list[int]
    dominated: list[int]
    degenerate: list[int] = Field(default_factory=list)
    duplicate: list[int] = Field(default_factory=list)
    neighbors: list[tuple[int, int]]
    root: int
    in_tree: list[tuple[int, int]]
    g_mode: Optional[str] = None
    g_circ_norm: Optional[float] = None
    c_g: Optional[float] = None
    g_circ: Optional[list[list[list[float]]]] = None
    h_null_basis: list[list[list[list[float]]]] = Field(default_factory=list)
    edges: list[EdgeReport] = Field(default_factory=list)
    borderline: list[str] = Field(default_factory=list)


class SlopeReport(BaseModel):
    model: str
    span: int
    replication: Optional[int] = None
    fitted_constant: float
    fitted_intercept: float
    checkpoints: tuple[int, int]
    ratios: tuple[float, float]
    # null when the reference ratio is zero or either ratio is not finite
    quotient: Optional[float] = None
