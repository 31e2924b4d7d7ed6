"""Loss and outcome generators for stochastic, oblivious-adversarial and corrupted regimes.

Environments own their random stream; the harness hands each one a generator that is
independent of the learner's.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from bobw_lab.domain.errors import ConfigurationError
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.semibandit import ActionSet, ExplicitVertices, MSet

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12


class LossLaw(str, Enum):
    BERNOULLI = "bernoulli"
    UNIFORM = "uniform"


class ScheduleKind(str, Enum):
    CYCLIC = "cyclic"
    DOUBLING = "doubling"


class CorruptionMap(str, Enum):
    FLIP_TO_WORST = "flip_to_worst"
    TARGETED_ARM_BOOST = "targeted_arm_boost"


@dataclass(frozen=True, slots=True)
class StochasticRegime:
    """i.i.d. draws: per-arm means for semi-bandits, an outcome distribution for games."""

    parameters: tuple[float, ...]
    law: LossLaw = LossLaw.BERNOULLI
    spread: float = 0.0


@dataclass(frozen=True, slots=True)
class ScheduleRegime:
    """Oblivious schedule cycling through ``patterns`` every round or in phases of doubling length."""

    kind: ScheduleKind
    patterns: tuple = ()


@dataclass(frozen=True, slots=True)
class CorruptedRegime:
    base: StochasticRegime
    corruption: CorruptionMap
    budget: float
    target: int | None = None


Regime = Union[StochasticRegime, ScheduleRegime, CorruptedRegime]


@dataclass(slots=True)
class Emission:
    """One round's draw. ``shadow`` is the pre-corruption draw and ``corruption`` the budget it used."""

    value: NDArray[np.float64] | int
    shadow: NDArray[np.float64] | int | None = None
    corruption: float = 0.0


def schedule_index(kind: ScheduleKind, t: int, n_patterns: int) -> int:
    """Pattern played at round ``t`` (1-based)."""
    if kind is ScheduleKind.CYCLIC:
        return (t - 1) % n_patterns
    # phase j covers rounds [2^j, 2^(j+1)); patterns alternate between phases
    phase = int(t).bit_length() - 1
    return phase % n_patterns


@dataclass(frozen=True, slots=True)
class SemiBanditGaps:
    means: NDArray[np.float64]
    optimal: NDArray[np.int64]
    arm_gaps: NDArray[np.float64]

    def regret(self, action: ArrayLike) -> float:
        return float(self.means @ (np.asarray(action, dtype=float) - self.optimal))


def semibandit_gaps(means: ArrayLike, action_set: ActionSet) -> SemiBanditGaps:
    mu = np.asarray(means, dtype=float)
    if isinstance(action_set, MSet):
        order = np.argsort(mu, kind="stable")
        m = action_set.m
        if m < mu.size and mu[order[m]] - mu[order[m - 1]] <= TIE_TOL:
            raise ConfigurationError("optimal m-set is not unique: the m-th and (m+1)-th smallest means tie")
        optimal = np.zeros(mu.size, dtype=np.int64)
        optimal[order[:m]] = 1
    elif isinstance(action_set, ExplicitVertices):
        vertices = action_set.matrix()
        values = vertices @ mu
        order = np.argsort(values, kind="stable")
        if values.size > 1 and values[order[1]] - values[order[0]] <= TIE_TOL:
            raise ConfigurationError("optimal vertex is not unique")
        optimal = vertices[order[0]].astype(np.int64)
    else:
        raise ConfigurationError(f"unsupported action set {action_set!r}")
    selected = optimal == 1
    threshold = float(mu[selected].max()) if selected.any() else 0.0
    arm_gaps = np.where(selected, 0.0, np.maximum(mu - threshold, 0.0))
    return SemiBanditGaps(means=mu, optimal=optimal, arm_gaps=arm_gaps)


def best_fixed_action(action_set: ActionSet, totals: ArrayLike) -> NDArray[np.float64]:
    """Best fixed semi-bandit action for cumulative arm losses ``totals``."""
    totals = np.asarray(totals, dtype=float)
    if isinstance(action_set, MSet):
        chosen = np.zeros(totals.size)
        chosen[np.argsort(totals, kind="stable")[:action_set.m]] = 1.0
        return chosen
    vertices = action_set.matrix()
    return vertices[int(np.argmin(vertices @ totals))]


def pm_gaps(game: PMGame, nu: ArrayLike) -> NDArray[np.float64]:
    """Delta_a = (L nu)_a - min_b (L nu)_b; a unique optimal action is required."""
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (game.d,) or np.any(nu < 0.0) or abs(float(nu.sum()) - 1.0) > 1e-9:
        raise ConfigurationError(f"outcome distribution must be a probability vector of length {game.d}")
    expected = game.loss @ nu
    best = float(expected.min())
    winners = np.flatnonzero(expected - best <= TIE_TOL)
    if winners.size > 1:
        raise ConfigurationError(
            "optimal action is not unique under the outcome distribution",
            details={"tied_actions": winners.tolist()},
        )
    return expected - best


def _check_law(regime: StochasticRegime) -> None:
    values = np.asarray(regime.parameters, dtype=float)
    if regime.spread < 0.0:
        raise ConfigurationError("spread must be nonnegative")
    if regime.law is LossLaw.UNIFORM:
        slack = np.minimum(values, 1.0 - values)
        if np.any(regime.spread > slack + 1e-12):
            raise ConfigurationError("uniform-interval spread leaves [0, 1] for some mean")


@dataclass
class SemiBanditEnv:
    d: int
    action_set: ActionSet
    regime: Regime
    spent: float = field(default=0.0, init=False)

    def __post_init__(self) -> None:
        if isinstance(self.regime, ScheduleRegime):
            patterns = np.asarray(self.regime.patterns, dtype=float)
            if patterns.ndim != 2 or patterns.shape[1] != self.d or patterns.shape[0] == 0:
                raise ConfigurationError(f"semi-bandit schedule needs loss vectors of length {self.d}")
            if np.any(patterns < 0.0) or np.any(patterns > 1.0):
                raise ConfigurationError("scheduled losses must lie in [0, 1]")
            self._patterns = patterns
            return
        base = self.regime.base if isinstance(self.regime, CorruptedRegime) else self.regime
        means = np.asarray(base.parameters, dtype=float)
        if means.shape != (self.d,) or np.any(means < 0.0) or np.any(means > 1.0):
            raise ConfigurationError(f"means must be {self.d} values in [0, 1]")
        _check_law(base)
        self._base = base
        self._gaps = semibandit_gaps(means, self.action_set)
        if isinstance(self.regime, CorruptedRegime):
            if self.regime.budget < 0.0:
                raise ConfigurationError("corruption budget must be nonnegative")
            self._corrupted_losses = self._corruption_target(self.regime)

    @property
    def gaps(self) -> SemiBanditGaps | None:
        return getattr(self, "_gaps", None)

    @property
    def remaining_budget(self) -> float:
        if isinstance(self.regime, CorruptedRegime):
            return self.regime.budget - self.spent
        return 0.0

    def _corruption_target(self, regime: CorruptedRegime) -> NDArray[np.float64]:
        optimal = self._gaps.optimal == 1
        if regime.corruption is CorruptionMap.FLIP_TO_WORST:
            return np.where(optimal, 1.0, 0.0)
        target = regime.target
        if target is None:
            candidates = np.flatnonzero(~optimal)
            if candidates.size == 0:
                raise ConfigurationError("targeted boost needs an arm outside the optimal set")
            target = int(candidates[np.argmin(self._gaps.means[candidates])])
        if not 0 <= target < self.d:
            raise ConfigurationError(f"corruption target {target} is not an arm")
        boosted = np.full(self.d, np.nan)
        boosted[target] = 0.0
        boosted[optimal] = 1.0
        return boosted

    def _draw(self, rng: np.random.Generator) -> NDArray[np.float64]:
        means = np.asarray(self._base.parameters, dtype=float)
        if self._base.law is LossLaw.BERNOULLI:
            return (rng.random(self.d) < means).astype(float)
        return means + self._base.spread * (2.0 * rng.random(self.d) - 1.0)

    def emit(self, t: int, rng: np.random.Generator) -> Emission:
        if isinstance(self.regime, ScheduleRegime):
            index = schedule_index(self.regime.kind, t, self._patterns.shape[0])
            return Emission(value=self._patterns[index].copy())
        clean = self._draw(rng)
        if not isinstance(self.regime, CorruptedRegime):
            return Emission(value=clean)
        corrupted = np.where(np.isnan(self._corrupted_losses), clean, self._corrupted_losses)
        amount = float(np.max(np.abs(corrupted - clean)))
        if amount == 0.0 or amount > self.remaining_budget:
            return Emission(value=clean, shadow=clean)
        self.spent += amount
        return Emission(value=corrupted, shadow=clean, corruption=amount)


@dataclass
class PMEnv:
    game: PMGame
    regime: Regime
    spent: float = field(default=0.0, init=False)

    def __post_init__(self) -> None:
        if isinstance(self.regime, ScheduleRegime):
            patterns = [int(x) for x in self.regime.patterns]
            if not patterns or min(patterns) < 0 or max(patterns) >= self.game.d:
                raise ConfigurationError(f"game schedule needs outcome indices in [0, {self.game.d})")
            self._patterns = patterns
            return
        base = self.regime.base if isinstance(self.regime, CorruptedRegime) else self.regime
        self._nu = np.asarray(base.parameters, dtype=float)
        self._gaps = pm_gaps(self.game, self._nu)
        if isinstance(self.regime, CorruptedRegime):
            if self.regime.budget < 0.0:
                raise ConfigurationError("corruption budget must be nonnegative")
            self._corrupt_outcome = self._corruption_target(self.regime)

    @property
    def gaps(self) -> NDArray[np.float64] | None:
        return getattr(self, "_gaps", None)

    @property
    def remaining_budget(self) -> float:
        if isinstance(self.regime, CorruptedRegime):
            return self.regime.budget - self.spent
        return 0.0

    def _corruption_target(self, regime: CorruptedRegime) -> int:
        loss = self.game.loss
        best = int(np.argmin(self._gaps))
        if regime.corruption is CorruptionMap.FLIP_TO_WORST:
            return int(np.argmax(loss[best] - loss.min(axis=0)))
        target = regime.target
        if target is None:
            others = [a for a in range(self.game.k) if a != best]
            target = min(others, key=lambda a: self._gaps[a])
        if not 0 <= target < self.game.k:
            raise ConfigurationError(f"corruption target {target} is not an action")
        return int(np.argmax(loss[best] - loss[target]))

    def emit(self, t: int, rng: np.random.Generator) -> Emission:
        if isinstance(self.regime, ScheduleRegime):
            return Emission(value=self._patterns[schedule_index(self.regime.kind, t, len(self._patterns))])
        clean = int(rng.choice(self.game.d, p=self._nu))
        if not isinstance(self.regime, CorruptedRegime):
            return Emission(value=clean)
        corrupted = self._corrupt_outcome
        amount = float(np.max(np.abs(self.game.loss[:, corrupted] - self.game.loss[:, clean])))
        if amount == 0.0 or amount > self.remaining_budget:
            return Emission(value=clean, shadow=clean)
        self.spent += amount
        return Emission(value=corrupted, shadow=clean, corruption=amount)


Environment = Union[SemiBanditEnv, PMEnv]


def emit(env: Environment, t: int, rng: np.random.Generator) -> Emission:
    return env.emit(t, rng)
