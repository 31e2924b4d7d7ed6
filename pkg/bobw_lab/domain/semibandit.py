from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import null_space
from scipy.optimize import minimize, nnls

from bobw_lab.domain import ftrl
from bobw_lab.domain import regularizers as reg
from bobw_lab.domain.errors import ConfigurationError, DecompositionError, SolverError
from bobw_lab.domain.regularizers import Potential, PotentialKind

logger = logging.getLogger(__name__)

DECOMPOSITION_TOL = 1e-10
SELECTION_FLOOR = 1e-12
VERTEX_STATIONARITY_TOL = 1e-6


class Predictor(str, Enum):
    LS = "ls"
    GD = "gd"


@dataclass(frozen=True, slots=True)
class MSet:
    m: int


@dataclass(frozen=True, slots=True)
class ExplicitVertices:
    vertices: tuple[tuple[int, ...], ...]

    def matrix(self) -> NDArray[np.float64]:
        return np.asarray(self.vertices, dtype=float)


ActionSet = Union[MSet, ExplicitVertices]


@dataclass(slots=True)
class Decomposition:
    atoms: NDArray[np.int64]
    weights: NDArray[np.float64]

    def mean(self) -> NDArray[np.float64]:
        return self.weights @ self.atoms

    def residual(self, x: ArrayLike) -> float:
        return float(np.max(np.abs(self.mean() - np.asarray(x, dtype=float))))


@dataclass(slots=True)
class RoundOutcome:
    round: int
    x: NDArray[np.float64]
    action: NDArray[np.int64]
    observed_losses: NDArray[np.float64]
    prediction: NDArray[np.float64]
    loss_estimate: NDArray[np.float64]
    alpha: NDArray[np.float64]
    decomposition: Decomposition

    @property
    def incurred_loss(self) -> float:
        return float(np.nansum(self.observed_losses))


def estimate_loss(
        m: ArrayLike,
        x: ArrayLike,
        action: ArrayLike,
        losses: ArrayLike,
) -> NDArray[np.float64]:
    """Optimistic importance-weighted estimate m + a / x * (l - m)."""
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    a = np.asarray(action)
    selected = a == 1
    if np.any(x[selected] < SELECTION_FLOOR):
        raise SolverError("selected coordinate has vanishing marginal; the sampler produced an impossible action")
    observed = np.where(selected, np.asarray(losses, dtype=float), m)
    correction = np.zeros_like(m)
    np.divide(observed - m, x, out=correction, where=selected)
    return m + correction


def _greedy_mset(x: NDArray[np.float64], m: int) -> Decomposition:
    d = x.size
    residual = x.copy()
    remaining = 1.0
    atoms: list[NDArray[np.int64]] = []
    weights: list[float] = []
    for _ in range(d + 1):
        if remaining <= DECOMPOSITION_TOL:
            break
        order = np.argsort(-residual, kind="stable")
        chosen, rest = order[:m], order[m:]
        step = float(np.min(residual[chosen]))
        if rest.size:
            step = min(step, remaining - float(np.max(residual[rest])))
        step = min(step, remaining)
        if step <= 0.0:
            break
        atom = np.zeros(d, dtype=np.int64)
        atom[chosen] = 1
        atoms.append(atom)
        weights.append(step)
        residual[chosen] -= step
        remaining -= step
    if not atoms:
        raise DecompositionError("greedy decomposition produced no atoms")
    return Decomposition(atoms=np.vstack(atoms), weights=np.asarray(weights))


def _reduce_support(atoms: NDArray[np.float64], weights: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    """Carathéodory reduction: shift weight along null directions until at most d + 1 atoms remain."""
    d = atoms.shape[1]
    keep = weights > 0.0
    atoms, weights = atoms[keep], weights[keep]
    while weights.size > d + 1:
        system = np.vstack([atoms.T, np.ones(weights.size)])
        directions = null_space(system)
        if directions.shape[1] == 0:
            break
        direction = directions[:, 0]
        if not np.any(direction > 0):
            direction = -direction
        positive = direction > 1e-14
        ratio = weights[positive] / direction[positive]
        weights = weights - float(np.min(ratio)) * direction
        weights[np.argmin(np.where(positive, weights, np.inf))] = 0.0
        keep = weights > 1e-15
        atoms, weights = atoms[keep], weights[keep]
    return atoms, weights


def decompose(x: ArrayLike, action_set: ActionSet) -> Decomposition:
    x = np.asarray(x, dtype=float)
    if isinstance(action_set, MSet):
        if np.any(x < -DECOMPOSITION_TOL) or np.any(x > 1 + DECOMPOSITION_TOL) or abs(
                x.sum() - action_set.m) > 1e-8:
            raise DecompositionError("point lies outside the m-set polytope")
        decomposition = _greedy_mset(np.clip(x, 0.0, 1.0), action_set.m)
    else:
        vertices = action_set.matrix()
        system = np.vstack([vertices.T, np.ones(vertices.shape[0])])
        weights, _ = nnls(system, np.concatenate([x, [1.0]]))
        atoms, weights = _reduce_support(vertices, weights)
        decomposition = Decomposition(atoms=atoms.astype(np.int64), weights=weights)

    residual = decomposition.residual(x)
    if residual > DECOMPOSITION_TOL or abs(decomposition.weights.sum() - 1.0) > DECOMPOSITION_TOL:
        raise DecompositionError(
            f"decomposition residual {residual:.3e} exceeds {DECOMPOSITION_TOL}; point outside the hull",
            details={"residual": residual},
        )
    return decomposition


def decompose_and_sample(
        x: ArrayLike,
        action_set: ActionSet,
        rng: np.random.Generator,
) -> tuple[NDArray[np.int64], Decomposition]:
    decomposition = decompose(x, action_set)
    probabilities = decomposition.weights / decomposition.weights.sum()
    index = int(rng.choice(probabilities.size, p=probabilities))
    return decomposition.atoms[index].copy(), decomposition


class SemiBanditLearner:
    """Optimistic FTRL with the hybrid regularizer and variance-adaptive per-arm learning rates."""

    def __init__(
            self,
            *,
            d: int,
            action_set: ActionSet,
            horizon: int,
            epsilon: float = 0.5,
            predictor: Predictor = Predictor.LS,
            eta: float = 0.25,
            dual_tol: float = ftrl.DUAL_TOL,
            max_doublings: int = ftrl.MAX_DOUBLINGS,
    ) -> None:
        if horizon < 2:
            raise ConfigurationError("the horizon must be at least 2 so that gamma = log T is positive")
        if not 0.0 < epsilon <= 0.5:
            raise ConfigurationError(f"epsilon must lie in (0, 1/2], got {epsilon}")
        if predictor is Predictor.GD and not 0.0 < eta < 0.5:
            raise ConfigurationError(f"gradient-descent step must lie in (0, 1/2), got {eta}")
        if isinstance(action_set, MSet) and not 1 <= action_set.m <= d:
            raise ConfigurationError(f"m-set requires 1 <= m <= d, got m={action_set.m}, d={d}")
        if isinstance(action_set, ExplicitVertices):
            vertices = action_set.matrix()
            if vertices.ndim != 2 or vertices.shape[1] != d or not np.all(np.isin(vertices, (0.0, 1.0))):
                raise ConfigurationError("explicit vertices must be 0/1 vectors of length d")

        self.d = d
        self.action_set = action_set
        self.horizon = horizon
        self.gamma = math.log(horizon)
        self.epsilon = epsilon
        self.predictor = predictor
        self.eta = eta
        self.dual_tol = dual_tol
        self.max_doublings = max_doublings
        self.potential = Potential(PotentialKind.HYBRID_LBINFV, self.gamma)

        self.cum_loss_est = np.zeros(d)
        self.m_vec = np.full(d, 0.5)
        self.counts = np.zeros(d, dtype=np.int64)
        self.loss_sums = np.zeros(d)
        self.cum_alpha = np.zeros(d)
        self.round = 0

        self._warm_dual: float | None = None
        self._theta: NDArray[np.float64] | None = None

    @property
    def beta(self) -> NDArray[np.float64]:
        return np.sqrt((1.0 + self.epsilon) ** 2 + self.cum_alpha / self.gamma)

    def predict_ls(self) -> NDArray[np.float64]:
        return (0.5 + self.loss_sums) / (1.0 + self.counts)

    def predict_gd_update(self, action: ArrayLike, losses: ArrayLike) -> NDArray[np.float64]:
        selected = np.asarray(action) == 1
        refreshed = (1.0 - self.eta) * self.m_vec + self.eta * np.asarray(losses, dtype=float)
        self.m_vec = np.where(selected, refreshed, self.m_vec)
        return self.m_vec

    def update_alpha_beta(
            self,
            action: ArrayLike,
            x: ArrayLike,
            losses: ArrayLike,
            m: ArrayLike,
    ) -> NDArray[np.float64]:
        a = np.asarray(action)
        x = np.asarray(x, dtype=float)
        selected = a == 1
        error = np.where(selected, np.asarray(losses, dtype=float) - np.asarray(m, dtype=float), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            entropy_cap = np.where(selected, 2.0 * (1.0 - x) / (x ** 2 * self.gamma), 0.0)
        alpha = np.where(selected, error ** 2 * np.minimum(1.0, entropy_cap), 0.0)
        self.cum_alpha = self.cum_alpha + alpha
        return alpha

    def compute_x(self) -> NDArray[np.float64]:
        linear = self.cum_loss_est + self.m_vec
        if isinstance(self.action_set, MSet):
            problem = ftrl.FtrlProblem(linear, self.beta, self.potential, ftrl.MSetBox(self.d, self.action_set.m))
            solution = ftrl.solve(problem, warm_dual=self._warm_dual, tol=self.dual_tol,
                                  max_doublings=self.max_doublings)
            self._warm_dual = solution.dual
            return solution.point
        return self._compute_x_vertices(linear)

    def _compute_x_vertices(self, linear: NDArray[np.float64]) -> NDArray[np.float64]:
        vertices = self.action_set.matrix()
        n = vertices.shape[0]
        if n == 1:
            return vertices[0].copy()
        varying = np.ptp(vertices, axis=0) > 0
        beta = self.beta

        def objective(theta: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
            shifted = np.exp(theta - theta.max())
            lam = shifted / shifted.sum()
            x = lam @ vertices
            xv = x[varying]
            if not np.all((xv > 0.0) & (xv < 1.0)):
                return np.inf, np.zeros_like(theta)
            value = float(linear @ x + np.sum(beta[varying] * reg.evaluate(self.potential, xv)))
            grad_x = linear.copy()
            grad_x[varying] += beta[varying] * reg.grad(self.potential, xv)
            grad_lam = vertices @ grad_x
            return value, lam * (grad_lam - lam @ grad_lam)

        start = self._theta if self._theta is not None else np.zeros(n)
        result = minimize(objective, start, jac=True, method="L-BFGS-B", options={"maxiter": 500, "gtol": 1e-12})
        theta = result.x if np.isfinite(result.fun) and np.all(np.isfinite(result.x)) else start
        value, gradient = objective(theta)
        if not np.isfinite(value):
            raise SolverError("vertex-weight program left the interior of the hull")
        if not result.success:
            # stationarity in the softmax parameters, scaled by the size of the linear term
            stationarity = float(np.max(np.abs(gradient))) / max(1.0, float(np.max(np.abs(linear))))
            if stationarity > VERTEX_STATIONARITY_TOL:
                raise SolverError(
                    f"vertex-weight program stopped early: {result.message}",
                    details={"iterations": int(result.nit), "stationarity": stationarity},
                )
            logger.debug("vertex-weight program ended with %r at stationarity %.2e", result.message, stationarity)
        self._theta = theta
        shifted = np.exp(theta - theta.max())
        return (shifted / shifted.sum()) @ vertices

    def step(
            self,
            env_feedback: Callable[[NDArray[np.int64]], NDArray[np.float64]],
            rng: np.random.Generator,
    ) -> RoundOutcome:
        if self.round >= self.horizon:
            raise ConfigurationError(f"learner already played its {self.horizon} rounds")
        x = self.compute_x()
        action, decomposition = decompose_and_sample(x, self.action_set, rng)
        losses = np.asarray(env_feedback(action), dtype=float)
        prediction = self.m_vec.copy()

        estimate = estimate_loss(prediction, x, action, losses)
        self.cum_loss_est = self.cum_loss_est + estimate
        alpha = self.update_alpha_beta(action, x, losses, prediction)

        selected = action == 1
        self.counts = self.counts + selected
        self.loss_sums = self.loss_sums + np.where(selected, losses, 0.0)
        if self.predictor is Predictor.LS:
            self.m_vec = self.predict_ls()
        else:
            self.predict_gd_update(action, losses)
        self.round += 1

        return RoundOutcome(
            round=self.round,
            x=x,
            action=action,
            observed_losses=np.where(selected, losses, np.nan),
            prediction=prediction,
            loss_estimate=estimate,
            alpha=alpha,
            decomposition=decomposition,
        )
