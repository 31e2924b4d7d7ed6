from __future__ import annotations

import os
from functools import lru_cache

from pydantic import BaseModel


class SolverSettings(BaseModel):
    root_tol: float = 1e-12
    lp_delta: float = 1e-7
    exo_max_iterations: int = 2000
    exo_tolerance: float = 1e-4
    exo_patience: int = 100
    dual_doublings: int = 200


class RunnerSettings(BaseModel):
    workers: int = 1
    output_dir: str = "runs"


class TelemetrySettings(BaseModel):
    tracking_uri: str | None = None
    experiment_name: str = "bobw-lab"

    @property
    def enabled(self) -> bool:
        return bool(self.tracking_uri)


class AppConfig(BaseModel):
    solver: SolverSettings = SolverSettings()
    runner: RunnerSettings = RunnerSettings()
    telemetry: TelemetrySettings = TelemetrySettings()

    @classmethod
    def load(cls) -> "AppConfig":
        return cls(
            solver=SolverSettings(
                root_tol=float(os.getenv("BOBW_ROOT_TOL", "1e-12")),
                lp_delta=float(os.getenv("BOBW_LP_DELTA", "1e-7")),
                exo_max_iterations=int(os.getenv("BOBW_EXO_MAX_ITERATIONS", "2000")),
                exo_tolerance=float(os.getenv("BOBW_EXO_TOLERANCE", "1e-4")),
                exo_patience=int(os.getenv("BOBW_EXO_PATIENCE", "100")),
                dual_doublings=int(os.getenv("BOBW_DUAL_DOUBLINGS", "200")),
            ),
            runner=RunnerSettings(
                workers=max(1, int(os.getenv("BOBW_WORKERS", "1"))),
                output_dir=os.getenv("BOBW_OUTPUT_DIR", "runs"),
            ),
            telemetry=TelemetrySettings(
                tracking_uri=os.getenv("MLFLOW_TRACKING_URI") or None,
                experiment_name=os.getenv("MLFLOW_EXPERIMENT_NAME", "bobw-lab"),
            ),
        )


@lru_cache(maxsize=1)
def get_settings() -> AppConfig:
    return AppConfig.load()
