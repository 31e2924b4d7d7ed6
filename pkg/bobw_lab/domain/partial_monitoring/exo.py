"""Exploration by optimization with the hybrid regularizer.

For FTRL output q and learning rates beta the program chooses p (with p >= q/2) and an
estimation function G = G° + sum_j c_j N_j minimizing

    max_x  (p - q)^T L e_x + sum_{b in Pareto} beta_b sum_a p_a S_{q_b}(G(a, Phi[a, x])_b / (beta_b p_a)).

p is written as q/2 + s with s in the simplex scaled to total mass 1/2, so every iterate
is feasible. The objective is a maximum of convex functions; it is minimized by projected
subgradient steps taken at the maximizing outcome.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from bobw_lab.domain import regularizers as reg
from bobw_lab.domain.errors import LabError, SolverError, UnboundedStabilityError
from bobw_lab.domain.partial_monitoring.analysis import GameAnalysis
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.regularizers import Potential, PotentialKind

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12
DEFAULT_MAX_ITERATIONS = 2000
DEFAULT_TOLERANCE = 1e-4
DEFAULT_PATIENCE = 100


def project_onto_scaled_simplex(v: ArrayLike, radius: float) -> NDArray[np.float64]:
    """Euclidean projection onto {s >= 0, sum s = radius} (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - radius
    ranks = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u - cumulative / ranks > 0)[0][-1])
    theta = cumulative[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def exo_value_bound(
        q: ArrayLike,
        beta: ArrayLike,
        gamma: float,
        *,
        m: int,
        k: int,
        pareto: tuple[int, ...],
) -> float:
    """2 m^2 k^2 sum_b min{q_b, (1 - q_b) / (gamma q_b)} / beta_b over Pareto b."""
    q = np.asarray(q, dtype=float)[list(pareto)]
    beta = np.asarray(beta, dtype=float)[list(pareto)]
    with np.errstate(divide="ignore"):
        second = np.where(q > 0.0, (1.0 - q) / (gamma * q), np.inf)
    return float(2.0 * m ** 2 * k ** 2 * np.sum(np.minimum(q, second) / beta))


@dataclass(slots=True)
class ExoEvaluation:
    value: float
    outcome_values: NDArray[np.float64]
    active_outcome: int
    grad_p: NDArray[np.float64]
    grad_coeffs: NDArray[np.float64]


@dataclass(slots=True)
class ExOSolution:
    p: NDArray[np.float64]
    g_coeffs: NDArray[np.float64]
    value: float
    iterations: int
    converged: bool
    fallback: bool = False
    shift: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))

    def estimator(self, analysis: GameAnalysis) -> NDArray[np.float64]:
        """G = G° + sum_j c_j N_j as a table of shape (k, |Sigma|, k)."""
        g = np.array(analysis.g_circ, dtype=float, copy=True)
        for coeff, basis in zip(self.g_coeffs, analysis.h_null_basis):
            g += coeff * basis
        return g


class ExoProblem:
    """One round's ExO program, with G° and the H° basis read at every (a, Phi[a, x])."""

    def __init__(
            self,
            game: PMGame,
            analysis: GameAnalysis,
            q: ArrayLike,
            beta: ArrayLike,
            gamma: float,
    ) -> None:
        if analysis.g_circ is None:
            raise SolverError("exploration by optimization needs a game with an estimation function G°")
        self.game = game
        self.analysis = analysis
        self.pareto = np.asarray(analysis.pareto, dtype=np.int64)
        self.q = np.asarray(q, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.gamma = gamma
        self.potential = Potential(PotentialKind.HYBRID_LOCAL, gamma)
        if np.any(self.q[self.pareto] <= 0.0):
            raise SolverError("FTRL output must be strictly positive on Pareto actions")

        self.q_pareto = self.q[self.pareto]
        self.beta_pareto = self.beta[self.pareto]
        self.g_circ_eval = game.evaluate(analysis.g_circ)[:, :, self.pareto]  # (k, d, P)
        if analysis.h_null_basis:
            stacked = np.stack(analysis.h_null_basis)  # (J, k, S, k)
            self.basis_eval = np.stack([game.evaluate(n)[:, :, self.pareto] for n in stacked])
        else:
            self.basis_eval = np.zeros((0,) + self.g_circ_eval.shape)
        self.coeff_scale = max(1.0, float(np.max(np.abs(self.g_circ_eval))))
        self._warm_y: NDArray[np.float64] | None = None

    @property
    def k(self) -> int:
        return self.game.k

    @property
    def n_coeffs(self) -> int:
        return int(self.basis_eval.shape[0])

    def estimator_values(self, coeffs: NDArray[np.float64]) -> NDArray[np.float64]:
        if self.n_coeffs == 0:
            return self.g_circ_eval
        return self.g_circ_eval + np.tensordot(coeffs, self.basis_eval, axes=1)

    def evaluate(self, p: ArrayLike, coeffs: ArrayLike) -> ExoEvaluation:
        p = np.asarray(p, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        g = self.estimator_values(coeffs)  # (k, d, P)
        transformation = (p - self.q) @ self.game.loss  # (d,)

        p_safe = np.maximum(p, PROBABILITY_FLOOR)[:, None, None]
        scale = self.beta_pareto[None, None, :] * p_safe
        z = g / scale
        q_b = np.broadcast_to(self.q_pareto[None, None, :], z.shape)
        initial = self._warm_y if self._warm_y is not None and self._warm_y.shape == z.shape else None
        value, y = reg.stability_terms(self.potential, q_b, z, initial=initial)
        value = np.asarray(value)
        y = np.asarray(y)
        self._warm_y = y
        terms = scale * value
        # p_a -> 0 limit of beta p S(g / (beta p))
        zero = p <= PROBABILITY_FLOOR
        if zero.any():
            limit = q_b * np.maximum(g, 0.0) + (1.0 - q_b) * np.maximum(-g, 0.0)
            terms = np.where(zero[:, None, None], limit, terms)

        outcome_values = transformation + terms.sum(axis=(0, 2))
        x = int(np.argmax(outcome_values))

        derivative = q_b[:, x, :] - y[:, x, :]  # d value / d g at the active outcome, (k, P)
        slope_p = self.beta_pareto[None, :] * (value[:, x, :] - z[:, x, :] * derivative)
        grad_p = self.game.loss[:, x] + slope_p.sum(axis=1)
        if self.n_coeffs:
            grad_coeffs = np.einsum("jab,ab->j", self.basis_eval[:, :, x, :], derivative)
        else:
            grad_coeffs = np.zeros(0)
        return ExoEvaluation(
            value=float(outcome_values[x]),
            outcome_values=outcome_values,
            active_outcome=x,
            grad_p=grad_p,
            grad_coeffs=grad_coeffs,
        )


def exo_objective(
        game: PMGame,
        analysis: GameAnalysis,
        p: ArrayLike,
        g_table: ArrayLike,
        q: ArrayLike,
        beta: ArrayLike,
        gamma: float,
) -> float:
    """Objective value for an explicit estimation function ``g_table`` of shape (k, |Sigma|, k)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    beta = np.asarray(beta, dtype=float)
    pareto = list(analysis.pareto)
    potential = Potential(PotentialKind.HYBRID_LOCAL, gamma)
    g = game.evaluate(np.asarray(g_table, dtype=float))[:, :, pareto]
    best = -math.inf
    for x in range(game.d):
        total = float((p - q) @ game.loss[:, x])
        for j, b in enumerate(pareto):
            for a in range(game.k):
                value = g[a, x, j]
                if p[a] <= PROBABILITY_FLOOR:
                    total += q[b] * max(value, 0.0) + (1.0 - q[b]) * max(-value, 0.0)
                    continue
                try:
                    total += beta[b] * p[a] * reg.stability(potential, q[b], value / (beta[b] * p[a]))
                except UnboundedStabilityError:
                    return math.inf
        best = max(best, total)
    return best


def exo_subgradient(
        problem: ExoProblem,
        p: ArrayLike,
        coeffs: ArrayLike,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Subgradient in (p, coefficients) taken at the maximizing outcome."""
    evaluation = problem.evaluate(p, coeffs)
    return evaluation.grad_p, evaluation.grad_coeffs


def solve_exo(
        problem: ExoProblem,
        *,
        warm: ExOSolution | None = None,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        tolerance: float = DEFAULT_TOLERANCE,
        patience: int = DEFAULT_PATIENCE,
) -> ExOSolution:
    q = problem.q
    base_shift = 0.5 * q
    base_coeffs = np.zeros(problem.n_coeffs)
    try:
        baseline = problem.evaluate(q, base_coeffs)
    except LabError:
        logger.exception("ExO objective failed at the feasible default point")
        raise

    def fallback(iterations: int) -> ExOSolution:
        return ExOSolution(p=q.copy(), g_coeffs=base_coeffs, value=baseline.value, iterations=iterations,
                           converged=False, fallback=True, shift=base_shift)

    shift, coeffs, current = base_shift, base_coeffs, baseline
    if warm is not None and warm.shift.size == q.size and warm.g_coeffs.size == problem.n_coeffs:
        try:
            candidate = problem.evaluate(0.5 * q + warm.shift, warm.g_coeffs)
            if np.isfinite(candidate.value) and candidate.value < current.value:
                shift, coeffs, current = warm.shift.copy(), warm.g_coeffs.copy(), candidate
        except LabError:
            logger.debug("warm start rejected", exc_info=True)

    best_shift, best_coeffs, best = shift, coeffs, current
    reference = best.value
    stall = 0
    converged = False
    iterations = 0
    try:
        for iterations in range(1, max_iterations + 1):
            grad_s = current.grad_p - current.grad_p.mean()
            grad_c = current.grad_coeffs
            norm_s = float(np.linalg.norm(grad_s))
            norm_c = float(np.linalg.norm(grad_c))
            if norm_s == 0.0 and norm_c == 0.0:
                converged = True
                break
            step = 1.0 / math.sqrt(iterations)
            if norm_s > 0.0:
                shift = project_onto_scaled_simplex(shift - 0.5 * step * grad_s / norm_s, 0.5)
            if norm_c > 0.0:
                coeffs = coeffs - problem.coeff_scale * step * grad_c / norm_c
            current = problem.evaluate(0.5 * q + shift, coeffs)
            if not np.isfinite(current.value):
                shift, coeffs, current = best_shift, best_coeffs, best
                stall += 1
            elif current.value < reference - tolerance * (1.0 + abs(reference)):
                reference = current.value
                stall = 0
            else:
                stall += 1
            if np.isfinite(current.value) and current.value < best.value:
                best_shift, best_coeffs, best = shift.copy(), coeffs.copy(), current
            if stall >= patience:
                converged = True
                break
    except LabError:
        logger.warning("ExO iteration failed after %d steps; falling back to (q, G°)", iterations, exc_info=True)
        return fallback(iterations)

    if not np.isfinite(best.value):
        return fallback(iterations)
    return ExOSolution(
        p=0.5 * q + best_shift,
        g_coeffs=best_coeffs,
        value=best.value,
        iterations=iterations,
        converged=converged,
        shift=best_shift,
    )
