from __future__ import annotations

from enum import Enum


class Observability(str, Enum):
    LOCALLY = "Locally"
    GLOBALLY_ONLY = "GloballyOnly"
    NOT_GLOBAL = "NotGlobal"

    @property
    def globally_observable(self) -> bool:
        return self is not Observability.NOT_GLOBAL


class EstimatorMode(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"


class Algorithm(str, Enum):
    LBINFV_LS = "LBINFV-LS"
    LBINFV_GD = "LBINFV-GD"
    PM_LOCAL = "PM-Local"
    PM_GLOBAL = "PM-Global"

    @property
    def is_partial_monitoring(self) -> bool:
        return self in (Algorithm.PM_LOCAL, Algorithm.PM_GLOBAL)
