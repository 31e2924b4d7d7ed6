"""Cumulative regret bookkeeping on a geometric checkpoint grid."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from bobw_lab.domain.errors import SolverError

MIN_CHECKPOINT = 8


def checkpoint_grid(horizon: int) -> tuple[int, ...]:
    """Rounds ceil(T 2^-j) for j >= 0 that are at least 8, always including T, ascending."""
    points = {horizon}
    j = 1
    while True:
        t = math.ceil(horizon / 2 ** j)
        if t < MIN_CHECKPOINT:
            break
        points.add(t)
        j += 1
    return tuple(sorted(points))


class RegretTrace:
    """Regret of one replication sampled at the checkpoint grid.

    Stochastic and corrupted runs record pseudo-regret increments computed from the gaps.
    Adversarial runs record the learner's loss and the loss vector of every comparator;
    the best fixed comparator over the whole horizon is chosen in :meth:`finalize`.
    """

    def __init__(self, horizon: int, *, adversarial: bool = False) -> None:
        self.horizon = horizon
        self.adversarial = adversarial
        self.checkpoints = checkpoint_grid(horizon)
        self._next = 0
        self.round = 0

        self._regret = 0.0
        self._expected = 0.0
        self._learner = 0.0
        self._expected_learner = 0.0
        self._comparators: NDArray[np.float64] | None = None

        self._regret_at: list[float] = []
        self._expected_at: list[float] = []
        self._learner_at: list[float] = []
        self._expected_learner_at: list[float] = []
        self._comparators_at: list[NDArray[np.float64]] = []
        self._final_regret: NDArray[np.float64] | None = None
        self._final_expected: NDArray[np.float64] | None = None
        self.comparator: NDArray[np.float64] | None = None

    def _advance(self) -> None:
        self.round += 1
        if self.round > self.horizon:
            raise SolverError(f"trace already holds {self.horizon} rounds")

    def _at_checkpoint(self) -> bool:
        if self._next < len(self.checkpoints) and self.round == self.checkpoints[self._next]:
            self._next += 1
            return True
        return False

    def record(self, *, regret: float, expected: float) -> None:
        """Append one round of pseudo-regret and the expected pseudo-regret of the sampling law."""
        if self.adversarial:
            raise SolverError("adversarial traces record losses, not gap increments")
        self._advance()
        self._regret += regret
        self._expected += expected
        if self._at_checkpoint():
            self._regret_at.append(self._regret)
            self._expected_at.append(self._expected)

    def record_losses(self, *, learner_loss: float, expected_loss: float, losses: ArrayLike) -> None:
        if not self.adversarial:
            raise SolverError("stochastic traces record gap increments")
        self._advance()
        losses = np.asarray(losses, dtype=float)
        if self._comparators is None:
            self._comparators = np.zeros_like(losses)
        self._learner += learner_loss
        self._expected_learner += expected_loss
        self._comparators = self._comparators + losses
        if self._at_checkpoint():
            self._learner_at.append(self._learner)
            self._expected_learner_at.append(self._expected_learner)
            self._comparators_at.append(self._comparators.copy())

    def finalize(self, best: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None) -> None:
        """Close the trace; ``best`` maps cumulative comparator losses to the best fixed comparator's weights."""
        if self.round != self.horizon:
            raise SolverError(f"trace holds {self.round} of {self.horizon} rounds")
        if not self.adversarial:
            self._final_regret = np.asarray(self._regret_at)
            self._final_expected = np.asarray(self._expected_at)
            return
        if best is None:
            best = _best_single
        weights = np.asarray(best(self._comparators), dtype=float)
        self.comparator = weights
        comparator_loss = np.asarray([c @ weights for c in self._comparators_at])
        self._final_regret = np.asarray(self._learner_at) - comparator_loss
        self._final_expected = np.asarray(self._expected_learner_at) - comparator_loss

    def cumulative(self) -> NDArray[np.float64]:
        if self._final_regret is None:
            raise SolverError("trace is not finalized")
        return self._final_regret

    def expected(self) -> NDArray[np.float64]:
        if self._final_expected is None:
            raise SolverError("trace is not finalized")
        return self._final_expected


def _best_single(totals: NDArray[np.float64]) -> NDArray[np.float64]:
    weights = np.zeros_like(totals)
    weights[int(np.argmin(totals))] = 1.0
    return weights
