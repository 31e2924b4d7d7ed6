from __future__ import annotations

import logging
import math
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from bobw_lab.domain.errors import ConfigurationError
from bobw_lab.schemas import SlopeReport

logger = logging.getLogger(__name__)

RECOMMENDED_CHECKPOINTS = 10


class GrowthModel(str, Enum):
    LOG_T = "logT"
    SQRT_T = "sqrtT"
    SQRT_T_LOG_T = "sqrtTlogT"
    T_TWO_THIRDS = "T23"
    LINEAR = "T"


_GROWTH: dict[GrowthModel, Callable[[NDArray[np.float64]], NDArray[np.float64]]] = {
    GrowthModel.LOG_T: np.log,
    GrowthModel.SQRT_T: np.sqrt,
    GrowthModel.SQRT_T_LOG_T: lambda t: np.sqrt(t * np.log(t)),
    GrowthModel.T_TWO_THIRDS: lambda t: t ** (2.0 / 3.0),
    GrowthModel.LINEAR: lambda t: t,
}


def growth(model: GrowthModel, t: Sequence[float] | NDArray[np.float64]) -> NDArray[np.float64]:
    return _GROWTH[model](np.asarray(t, dtype=float))


def slope_check(
        checkpoints: Sequence[int],
        regret: Sequence[float],
        model: GrowthModel | str,
        *,
        span: int = 1,
        replication: int | None = None,
) -> SlopeReport:
    """Fit regret ~ c f(t) + b on the later half of the checkpoints and compare R/f at the last two."""
    model = GrowthModel(model)
    t = np.asarray(checkpoints, dtype=float)
    r = np.asarray(regret, dtype=float)
    if t.shape != r.shape or t.ndim != 1:
        raise ConfigurationError("checkpoints and regret must be equally long vectors")
    if span < 1:
        raise ConfigurationError(f"span must be at least 1, got {span}")
    if t.size < span + 2:
        raise ConfigurationError(f"slope check with span {span} needs at least {span + 2} checkpoints, got {t.size}")
    if t.size < RECOMMENDED_CHECKPOINTS:
        logger.warning("slope check on %d checkpoints; at least %d are recommended", t.size, RECOMMENDED_CHECKPOINTS)

    f = growth(model, t)
    later = slice(t.size // 2, None)
    constant, intercept = np.polyfit(f[later], r[later], 1)

    reference = -1 - span
    ratio_ref = float(r[reference] / f[reference])
    ratio_last = float(r[-1] / f[-1])
    quotient = ratio_last / ratio_ref if ratio_ref != 0.0 else math.inf
    if not math.isfinite(quotient):
        logger.warning("slope check quotient is undefined (ratios %r, %r)", ratio_ref, ratio_last)
    return SlopeReport(
        model=model.value,
        span=span,
        replication=replication,
        fitted_constant=float(constant),
        fitted_intercept=float(intercept),
        checkpoints=(int(t[reference]), int(t[-1])),
        ratios=(ratio_ref, ratio_last),
        quotient=quotient if math.isfinite(quotient) else None,
    )
