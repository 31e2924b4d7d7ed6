"""Best-of-both-worlds learner for globally observable games: barrier-pair FTRL plus uniform mixing."""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import NDArray

from bobw_lab.domain import ftrl
from bobw_lab.domain.errors import ClassificationRefusal, ConfigurationError
from bobw_lab.domain.partial_monitoring.analysis import GameAnalysis, with_g_mode
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.partial_monitoring.local_observable import FeedbackOracle, PMRoundRecord, sample_action
from bobw_lab.domain.regularizers import Potential, PotentialKind
from bobw_lab.domain.status import EstimatorMode

logger = logging.getLogger(__name__)


def default_c1(c_g: float, k: int, horizon: int) -> float:
    return (3.0 * c_g / (k * math.log(horizon))) ** (2.0 / 3.0)


class GlobalPMLearner:
    def __init__(
            self,
            game: PMGame,
            analysis: GameAnalysis,
            *,
            horizon: int,
            c1: float | None = None,
            dual_tol: float = ftrl.DUAL_TOL,
            max_doublings: int = ftrl.MAX_DOUBLINGS,
    ) -> None:
        if not analysis.observability.globally_observable:
            raise ClassificationRefusal(
                f"PM-Global needs a globally observable game; {game.name or 'game'} is not",
                details={"observability": analysis.observability.value},
            )
        if horizon < 2:
            raise ConfigurationError(f"the horizon must be at least 2, got {horizon}")
        analysis = with_g_mode(game, analysis, EstimatorMode.GLOBAL)
        if c1 is not None and c1 <= 0.0:
            raise ConfigurationError(f"c1 must be positive, got {c1}")

        self.game = game
        self.analysis = analysis
        self.horizon = horizon
        self.k = game.k
        self.c_g = float(analysis.c_g)
        self.c1 = default_c1(self.c_g, self.k, horizon) if c1 is None else c1
        self.potential = Potential(PotentialKind.LOG_BARRIER_PAIR)
        self.region = ftrl.SimplexOnSupport(analysis.pareto)
        self.g_circ = analysis.g_circ
        self.dual_tol = dual_tol
        self.max_doublings = max_doublings

        self.cum_y = np.zeros(self.k)
        self.cum_z = 0.0
        self.round = 0
        self.clamps = 0
        self._warm_dual: float | None = None

    @property
    def beta(self) -> float:
        return self.c1 * (self.k + self.cum_z) ** (2.0 / 3.0)

    def global_ftrl(self) -> NDArray[np.float64]:
        problem = ftrl.FtrlProblem(self.cum_y, np.full(self.k, self.beta), self.potential, self.region)
        solution = ftrl.solve(problem, warm_dual=self._warm_dual, tol=self.dual_tol,
                              max_doublings=self.max_doublings)
        self._warm_dual = solution.dual
        return solution.point

    def mix_and_rate(self, q: NDArray[np.float64]) -> tuple[NDArray[np.float64], float, float, bool]:
        """Return (p, gamma_t, z_t, clamped)."""
        q = np.asarray(q, dtype=float)
        z = float(np.sum(np.minimum(q, 1.0 - q)))
        raw = math.sqrt(2.0) * self.c_g * z / math.sqrt(self.beta)
        clamped = raw > 1.0
        mixing = min(1.0, raw)
        p = (1.0 - mixing) * q + mixing / self.k
        return p, mixing, z, clamped

    def play_round(self, feedback: FeedbackOracle, rng: np.random.Generator) -> PMRoundRecord:
        if self.round >= self.horizon:
            raise ConfigurationError(f"learner already played its {self.horizon} rounds")
        beta = self.beta
        q = self.global_ftrl()
        p, mixing, z, clamped = self.mix_and_rate(q)
        if clamped:
            self.clamps += 1
            logger.debug("round %d: mixing rate clamped at 1", self.round + 1)

        action = sample_action(p, rng)
        symbol = int(feedback(action))
        estimate = self.g_circ[action, symbol] / p[action]
        self.cum_y = self.cum_y + estimate
        self.cum_z += z
        self.round += 1

        return PMRoundRecord(
            round=self.round,
            q=q,
            p=p,
            action=action,
            symbol=symbol,
            estimate=estimate,
            beta=np.full(self.k, beta),
            mixing=mixing,
            z=z,
            clamped=clamped,
        )
