"""Separable-regularizer FTRL over the simplex (restricted support) and the m-set box.

The minimizer of <L, x> + sum_a w_a phi(x_a) under sum x = target satisfies
w_a phi'(x_a) + L_a = mu for a single multiplier mu, so the whole problem reduces to a
monotone one-dimensional search over mu.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from bobw_lab.domain import regularizers as reg
from bobw_lab.domain.errors import RootFindingError, SolverError
from bobw_lab.domain.regularizers import Potential

logger = logging.getLogger(__name__)

DUAL_TOL = 1e-12
MAX_DOUBLINGS = 200
MAX_DUAL_ITERATIONS = 200


@dataclass(frozen=True, slots=True)
class SimplexOnSupport:
    support: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.support:
            raise SolverError("simplex support must be nonempty")
        if len(set(self.support)) != len(self.support) or min(self.support) < 0:
            raise SolverError(f"invalid simplex support {self.support!r}")

    def active(self, size: int) -> NDArray[np.int64]:
        if max(self.support) >= size:
            raise SolverError(f"support {self.support!r} exceeds dimension {size}")
        return np.asarray(sorted(self.support), dtype=np.int64)

    @property
    def target(self) -> float:
        return 1.0


@dataclass(frozen=True, slots=True)
class MSetBox:
    d: int
    m: int

    def __post_init__(self) -> None:
        if not 1 <= self.m <= self.d:
            raise SolverError(f"m-set box requires 1 <= m <= d, got m={self.m}, d={self.d}")

    def active(self, size: int) -> NDArray[np.int64]:
        if size != self.d:
            raise SolverError(f"m-set box of dimension {self.d} used with a vector of size {size}")
        return np.arange(self.d, dtype=np.int64)

    @property
    def target(self) -> float:
        return float(self.m)


Region = Union[SimplexOnSupport, MSetBox]


@dataclass(slots=True)
class FtrlProblem:
    linear_term: NDArray[np.float64]
    weights: NDArray[np.float64]
    potential: Potential
    region: Region

    def __post_init__(self) -> None:
        self.linear_term = np.asarray(self.linear_term, dtype=float)
        self.weights = np.broadcast_to(np.asarray(self.weights, dtype=float), self.linear_term.shape).copy()
        if self.linear_term.ndim != 1:
            raise SolverError("linear term must be a vector")
        if not np.all(np.isfinite(self.linear_term)):
            raise SolverError("linear term contains non-finite entries")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise SolverError("regularizer weights must be positive and finite")
        if not self.potential.is_two_sided_barrier:
            raise SolverError(f"{self.potential.kind.value} cannot keep FTRL iterates inside the box")
        self.region.active(self.linear_term.size)

    @property
    def size(self) -> int:
        return int(self.linear_term.size)


@dataclass(slots=True)
class FtrlSolution:
    point: NDArray[np.float64]
    dual: float
    kkt_residual: float
    iterations: int = 0


def _coordinates(problem: FtrlProblem, active: NDArray[np.int64], mu: float,
                 initial: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
    g = (mu - problem.linear_term[active]) / problem.weights[active]
    return np.asarray(reg.grad_inverse(problem.potential, g, initial=initial), dtype=float)


def _mass_derivative(problem: FtrlProblem, active: NDArray[np.int64], q: NDArray[np.float64]) -> float:
    return float(np.sum(1.0 / (problem.weights[active] * reg.hess(problem.potential, q))))


def initial_bracket(problem: FtrlProblem) -> tuple[float, float]:
    """Multipliers at which every coordinate equals target / n; the root lies between them."""
    active = problem.region.active(problem.size)
    level = problem.region.target / active.size
    mus = problem.linear_term[active] + problem.weights[active] * reg.grad(problem.potential, level)
    return float(np.min(mus)), float(np.max(mus))


def dual_search(
        problem: FtrlProblem,
        mu_lo: float,
        mu_hi: float,
        *,
        tol: float = DUAL_TOL,
        max_doublings: int = MAX_DOUBLINGS,
) -> float:
    return _dual_search(problem, mu_lo, mu_hi, tol=tol, max_doublings=max_doublings)[0]


def _dual_search(
        problem: FtrlProblem,
        mu_lo: float,
        mu_hi: float,
        *,
        tol: float = DUAL_TOL,
        max_doublings: int = MAX_DOUBLINGS,
        warm: float | None = None,
) -> tuple[float, NDArray[np.float64], int]:
    active = problem.region.active(problem.size)
    target = problem.region.target

    def excess(mu: float) -> float:
        return float(np.sum(_coordinates(problem, active, mu))) - target

    if mu_lo > mu_hi:
        mu_lo, mu_hi = mu_hi, mu_lo
    width = max(mu_hi - mu_lo, 1.0)
    doublings = 0
    while excess(mu_lo) > 0.0:
        doublings += 1
        if doublings > max_doublings:
            raise SolverError("dual bracket could not be expanded downwards", details={"mu_lo": mu_lo})
        mu_lo -= width
        width *= 2.0
    width = max(mu_hi - mu_lo, 1.0)
    while excess(mu_hi) < 0.0:
        doublings += 1
        if doublings > max_doublings:
            raise SolverError("dual bracket could not be expanded upwards", details={"mu_hi": mu_hi})
        mu_hi += width
        width *= 2.0

    mu = warm if warm is not None and mu_lo < warm < mu_hi else 0.5 * (mu_lo + mu_hi)
    q = _coordinates(problem, active, mu)
    for iteration in range(1, MAX_DUAL_ITERATIONS + 1):
        h = float(np.sum(q)) - target
        if abs(h) <= tol:
            return mu, q, iteration
        if h < 0.0:
            mu_lo = mu
        else:
            mu_hi = mu
        slope = _mass_derivative(problem, active, q)
        candidate = mu - h / slope if slope > 0.0 else np.nan
        if not np.isfinite(candidate) or candidate <= mu_lo or candidate >= mu_hi:
            candidate = 0.5 * (mu_lo + mu_hi)
        if candidate == mu:
            # bracket collapsed to adjacent floats
            raise RootFindingError(
                f"dual search stalled at float resolution with |sum - target| = {abs(h):.3e} > {tol}",
                details={"mu": mu, "residual": h},
            )
        mu = candidate
        q = _coordinates(problem, active, mu, initial=q)
    raise RootFindingError(
        f"dual search did not reach |sum - target| <= {tol} in {MAX_DUAL_ITERATIONS} iterations",
        details={"mu": mu, "residual": float(np.sum(q)) - target},
    )


def solve(
        problem: FtrlProblem,
        *,
        warm_dual: float | None = None,
        tol: float = DUAL_TOL,
        max_doublings: int = MAX_DOUBLINGS,
) -> FtrlSolution:
    active = problem.region.active(problem.size)
    point = np.zeros(problem.size)
    if problem.region.target >= active.size:
        # the only feasible point puts full mass on every active coordinate
        point[active] = 1.0
        return FtrlSolution(point=point, dual=0.0, kkt_residual=0.0)

    # mu is searched relative to the smallest active loss so its float spacing stays fine
    offset = float(np.min(problem.linear_term[active]))
    shifted = FtrlProblem(problem.linear_term - offset, problem.weights, problem.potential, problem.region)
    mu_lo, mu_hi = initial_bracket(shifted)
    if mu_lo == mu_hi:
        point[active] = problem.region.target / active.size
        return FtrlSolution(point=point, dual=mu_lo + offset, kkt_residual=0.0)

    warm = None if warm_dual is None else warm_dual - offset
    mu, q, iterations = _dual_search(shifted, mu_lo, mu_hi, tol=tol, max_doublings=max_doublings, warm=warm)
    mu += offset
    point[active] = q
    stationarity = problem.weights[active] * reg.grad(problem.potential, q) + problem.linear_term[active] - mu
    residual = max(abs(float(np.sum(q)) - problem.region.target), float(np.max(np.abs(stationarity))))
    return FtrlSolution(point=point, dual=mu, kkt_residual=residual, iterations=iterations)


def objective(problem: FtrlProblem, point: ArrayLike) -> float:
    x = np.asarray(point, dtype=float)
    active = problem.region.active(problem.size)
    return float(
        problem.linear_term[active] @ x[active]
        + np.sum(problem.weights[active] * reg.evaluate(problem.potential, x[active]))
    )


@dataclass(slots=True)
class FtrlDecomposition:
    """Both sides of the standard FTRL regret inequality for a recorded run."""

    linear_regret: float
    penalty: float
    stability: float
    iterates: list[NDArray[np.float64]] = field(default_factory=list)

    @property
    def bound(self) -> float:
        return self.penalty + self.stability


def ftrl_decomposition(
        estimates: Sequence[ArrayLike],
        weights: Sequence[ArrayLike],
        potential: Potential,
        region: Region,
        comparator: ArrayLike,
) -> FtrlDecomposition:
    """Replay FTRL on ``estimates`` with per-round ``weights`` (one more entry than rounds).

    Returns sum <y_t, q_t - u> next to the penalty and stability terms that bound it.
    """
    ys = [np.asarray(y, dtype=float) for y in estimates]
    ws = [np.asarray(w, dtype=float) for w in weights]
    if len(ws) != len(ys) + 1:
        raise SolverError("weights must hold one entry per round plus the final round")
    u = np.asarray(comparator, dtype=float)
    size = u.size
    active = region.active(size)

    def psi(t: int, x: NDArray[np.float64]) -> float:
        w = np.broadcast_to(ws[t], (size,))
        return float(np.sum(w[active] * reg.evaluate(potential, x[active])))

    def breg(t: int, x: NDArray[np.float64], y: NDArray[np.float64]) -> float:
        w = np.broadcast_to(ws[t], (size,))
        return float(np.sum(w[active] * reg.bregman(potential, x[active], y[active])))

    cumulative = np.zeros(size)
    iterates: list[NDArray[np.float64]] = []
    for t in range(len(ys) + 1):
        solution = solve(FtrlProblem(cumulative.copy(), ws[t], potential, region))
        iterates.append(solution.point)
        if t < len(ys):
            cumulative = cumulative + ys[t]

    linear = float(sum(y @ (iterates[t] - u) for t, y in enumerate(ys)))
    penalty = sum(psi(t, iterates[t + 1]) - psi(t + 1, iterates[t + 1]) for t in range(len(ys)))
    penalty += psi(len(ys), u) - psi(0, iterates[0])
    stability = sum(
        float(y @ (iterates[t] - iterates[t + 1])) - breg(t, iterates[t + 1], iterates[t])
        for t, y in enumerate(ys)
    )
    return FtrlDecomposition(linear_regret=linear, penalty=float(penalty), stability=float(stability),
                             iterates=iterates)
