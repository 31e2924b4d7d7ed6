"""Best-of-both-worlds learner for locally observable partial-monitoring games."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from bobw_lab.domain import ftrl
from bobw_lab.domain.errors import ClassificationRefusal, ConfigurationError
from bobw_lab.domain.partial_monitoring.analysis import GameAnalysis
from bobw_lab.domain.partial_monitoring.exo import (
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_PATIENCE,
    DEFAULT_TOLERANCE,
    ExOSolution,
    ExoProblem,
    exo_value_bound,
    solve_exo,
)
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.regularizers import Potential, PotentialKind
from bobw_lab.domain.status import EstimatorMode, Observability

logger = logging.getLogger(__name__)

MIN_HORIZON = 8
DEFAULT_EPSILON = 1e-3
BOUND_TOLERANCE = 1e-3

# symbol code of the played action's feedback
FeedbackOracle = Callable[[int], int]


@dataclass(slots=True)
class PMRoundRecord:
    round: int
    q: NDArray[np.float64]
    p: NDArray[np.float64]
    action: int
    symbol: int
    estimate: NDArray[np.float64]
    beta: NDArray[np.float64]
    exo: ExOSolution | None = None
    exo_bound: float | None = None
    bound_exceeded: bool = False
    mixing: float | None = None
    z: float | None = None
    clamped: bool = False


def sample_action(p: NDArray[np.float64], rng: np.random.Generator) -> int:
    weights = np.maximum(p, 0.0)
    return int(rng.choice(weights.size, p=weights / weights.sum()))


class LocalPMLearner:
    """FTRL over the Pareto face with the hybrid regularizer, action-wise rates and ExO sampling."""

    def __init__(
            self,
            game: PMGame,
            analysis: GameAnalysis,
            *,
            horizon: int,
            epsilon: float = DEFAULT_EPSILON,
            exo_max_iterations: int = DEFAULT_MAX_ITERATIONS,
            exo_tolerance: float = DEFAULT_TOLERANCE,
            exo_patience: int = DEFAULT_PATIENCE,
            dual_tol: float = ftrl.DUAL_TOL,
            max_doublings: int = ftrl.MAX_DOUBLINGS,
    ) -> None:
        if analysis.observability is not Observability.LOCALLY:
            raise ClassificationRefusal(
                f"PM-Local needs a locally observable game; {game.name or 'game'} is {analysis.observability.value}",
                details={"observability": analysis.observability.value, "pareto": list(analysis.pareto)},
            )
        if horizon < MIN_HORIZON:
            raise ConfigurationError(f"PM-Local needs a horizon of at least {MIN_HORIZON}, got {horizon}")
        if epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
        if analysis.g_mode is not EstimatorMode.LOCAL:
            raise ConfigurationError("PM-Local needs the locally built estimation function G°")

        self.game = game
        self.analysis = analysis
        self.horizon = horizon
        self.gamma = math.log(horizon)
        self.epsilon = epsilon
        self.m = analysis.m
        self.k = game.k
        self.c = 2.0 * self.m * self.k
        self.beta_floor = 4.0 * self.m * self.k
        self.alpha0 = self.gamma ** -1.5 + epsilon
        self.potential = Potential(PotentialKind.HYBRID_LOCAL, self.gamma)
        self.region = ftrl.SimplexOnSupport(analysis.pareto)
        self.exo_max_iterations = exo_max_iterations
        self.exo_tolerance = exo_tolerance
        self.exo_patience = exo_patience
        self.dual_tol = dual_tol
        self.max_doublings = max_doublings

        self.cum_y = np.zeros(self.k)
        self.cum_alpha = np.zeros(self.k)
        self.round = 0
        self.exo_fallbacks = 0
        self.exo_unconverged = 0
        self.bound_excesses = 0

        self._warm_dual: float | None = None
        self._warm_exo: ExOSolution | None = None

    @property
    def beta(self) -> NDArray[np.float64]:
        raw = self.c * np.sqrt(self.alpha0 + self.cum_alpha / self.gamma)
        return np.maximum(self.beta_floor, raw)

    def compute_q(self) -> NDArray[np.float64]:
        problem = ftrl.FtrlProblem(self.cum_y, self.beta, self.potential, self.region)
        solution = ftrl.solve(problem, warm_dual=self._warm_dual, tol=self.dual_tol,
                              max_doublings=self.max_doublings)
        self._warm_dual = solution.dual
        return solution.point

    def learning_rate_update(self, q: NDArray[np.float64]) -> NDArray[np.float64]:
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            second = np.where(q > 0.0, (1.0 - q) / (self.gamma * q), 0.0)
        alpha = np.where(q > 0.0, np.minimum(q, second), 0.0)
        self.cum_alpha = self.cum_alpha + alpha
        return alpha

    def play_round(self, feedback: FeedbackOracle, rng: np.random.Generator) -> PMRoundRecord:
        if self.round >= self.horizon:
            raise ConfigurationError(f"learner already played its {self.horizon} rounds")
        q = self.compute_q()
        beta = self.beta

        if len(self.analysis.pareto) == 1:
            # a single Pareto action is optimal under every outcome
            action = int(self.analysis.pareto[0])
            symbol = int(feedback(action))
            self.round += 1
            return PMRoundRecord(round=self.round, q=q, p=q.copy(), action=action, symbol=symbol,
                                 estimate=np.zeros(self.k), beta=beta)

        problem = ExoProblem(self.game, self.analysis, q, beta, self.gamma)
        solution = solve_exo(
            problem,
            warm=self._warm_exo,
            max_iterations=self.exo_max_iterations,
            tolerance=self.exo_tolerance,
            patience=self.exo_patience,
        )
        if solution.fallback:
            self.exo_fallbacks += 1
        else:
            self._warm_exo = solution
            if not solution.converged:
                self.exo_unconverged += 1

        bound = exo_value_bound(q, beta, self.gamma, m=self.m, k=self.k, pareto=self.analysis.pareto)
        exceeded = solution.value > bound + BOUND_TOLERANCE
        if exceeded:
            self.bound_excesses += 1
            logger.debug("round %d: ExO value %.6g above bound %.6g", self.round + 1, solution.value, bound)

        p = solution.p
        action = sample_action(p, rng)
        symbol = int(feedback(action))
        g = solution.estimator(self.analysis)
        estimate = g[action, symbol] / p[action]
        self.cum_y = self.cum_y + estimate
        self.learning_rate_update(q)
        self.round += 1

        return PMRoundRecord(
            round=self.round,
            q=q,
            p=p,
            action=action,
            symbol=symbol,
            estimate=estimate,
            beta=beta,
            exo=solution,
            exo_bound=bound,
            bound_exceeded=exceeded,
        )
