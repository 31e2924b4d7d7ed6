"""One-dimensional convex potentials and the quantities FTRL analysis derives from them.

Every function accepts a scalar or an ndarray and returns the same shape back
(python floats for scalar input). Points are checked against the natural domain of
the kind: the log-barrier lives on (0, inf), the complement terms on (-inf, 1) and
the hybrids and the barrier pair on (0, 1).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import xlogy

from bobw_lab.domain.errors import RegularizerDomainError, RootFindingError, UnboundedStabilityError

logger = logging.getLogger(__name__)

BRACKET_LO = 1e-15
BRACKET_HI = 1.0 - 1e-15
STEP_RTOL = 1e-14
MAX_ROOT_ITERATIONS = 200

Scalar = Union[float, NDArray[np.float64]]


class PotentialKind(str, Enum):
    LOG_BARRIER = "log_barrier"
    COMP_NEG_SHANNON = "comp_neg_shannon"
    COMP_LOG_BARRIER = "comp_log_barrier"
    HYBRID_LBINFV = "hybrid_lbinfv"
    HYBRID_LOCAL = "hybrid_local"
    LOG_BARRIER_PAIR = "log_barrier_pair"


_HYBRIDS = {PotentialKind.HYBRID_LBINFV, PotentialKind.HYBRID_LOCAL}


@dataclass(frozen=True, slots=True)
class Potential:
    kind: PotentialKind
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise RegularizerDomainError(f"gamma must be a positive finite number, got {self.gamma!r}")

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind is PotentialKind.LOG_BARRIER:
            return 0.0, np.inf
        if self.kind in (PotentialKind.COMP_NEG_SHANNON, PotentialKind.COMP_LOG_BARRIER):
            return -np.inf, 1.0
        return 0.0, 1.0

    @property
    def gradient_range(self) -> tuple[float, float]:
        if self.kind is PotentialKind.LOG_BARRIER:
            return -np.inf, 0.0
        if self.kind is PotentialKind.COMP_LOG_BARRIER:
            return 0.0, np.inf
        return -np.inf, np.inf

    @property
    def is_two_sided_barrier(self) -> bool:
        """True when the gradient diverges at both 0 and 1 (usable as an FTRL regularizer on boxes)."""
        return self.kind in _HYBRIDS or self.kind is PotentialKind.LOG_BARRIER_PAIR


def _prepare(value: ArrayLike) -> tuple[NDArray[np.float64], bool]:
    arr = np.asarray(value, dtype=float)
    return arr, arr.ndim == 0


def _finish(out: NDArray[np.float64], scalar: bool) -> Scalar:
    if scalar:
        return float(out)
    return out


def _check_domain(pot: Potential, arr: NDArray[np.float64]) -> None:
    lo, hi = pot.domain
    if not np.all((arr > lo) & (arr < hi)):
        bad = arr[~((arr > lo) & (arr < hi))] if arr.ndim else arr
        raise RegularizerDomainError(
            f"{pot.kind.value} is defined on ({lo}, {hi}); got {np.ravel(bad)[:3].tolist()}",
        )


def _value(pot: Potential, z: NDArray[np.float64]) -> NDArray[np.float64]:
    kind = pot.kind
    if kind is PotentialKind.LOG_BARRIER:
        return -np.log(z)
    if kind is PotentialKind.COMP_NEG_SHANNON:
        return xlogy(1.0 - z, 1.0 - z)
    if kind is PotentialKind.COMP_LOG_BARRIER:
        return -np.log1p(-z)
    if kind is PotentialKind.LOG_BARRIER_PAIR:
        return -np.log(z) - np.log1p(-z)
    return z - 1.0 - np.log(z) + pot.gamma * (z + xlogy(1.0 - z, 1.0 - z))


def _grad(pot: Potential, z: NDArray[np.float64]) -> NDArray[np.float64]:
    kind = pot.kind
    if kind is PotentialKind.LOG_BARRIER:
        return -1.0 / z
    if kind is PotentialKind.COMP_NEG_SHANNON:
        return -np.log1p(-z) - 1.0
    if kind is PotentialKind.COMP_LOG_BARRIER:
        return 1.0 / (1.0 - z)
    if kind is PotentialKind.LOG_BARRIER_PAIR:
        return -1.0 / z + 1.0 / (1.0 - z)
    return 1.0 - 1.0 / z - pot.gamma * np.log1p(-z)


def _hess(pot: Potential, z: NDArray[np.float64]) -> NDArray[np.float64]:
    kind = pot.kind
    if kind is PotentialKind.LOG_BARRIER:
        return 1.0 / z ** 2
    if kind is PotentialKind.COMP_NEG_SHANNON:
        return 1.0 / (1.0 - z)
    if kind is PotentialKind.COMP_LOG_BARRIER:
        return 1.0 / (1.0 - z) ** 2
    if kind is PotentialKind.LOG_BARRIER_PAIR:
        return 1.0 / z ** 2 + 1.0 / (1.0 - z) ** 2
    return 1.0 / z ** 2 + pot.gamma / (1.0 - z)


def evaluate(pot: Potential, z: ArrayLike) -> Scalar:
    arr, scalar = _prepare(z)
    _check_domain(pot, arr)
    return _finish(_value(pot, arr), scalar)


def grad(pot: Potential, z: ArrayLike) -> Scalar:
    arr, scalar = _prepare(z)
    _check_domain(pot, arr)
    return _finish(_grad(pot, arr), scalar)


def hess(pot: Potential, z: ArrayLike) -> Scalar:
    arr, scalar = _prepare(z)
    _check_domain(pot, arr)
    return _finish(_hess(pot, arr), scalar)


def grad_inverse(pot: Potential, g: ArrayLike, *, initial: ArrayLike | None = None) -> Scalar:
    """Return z with grad(pot, z) = g.

    Single-component kinds and the barrier pair invert in closed form. The hybrids are
    solved numerically; targets beyond the gradient at the bracket ends saturate to the
    bracket ends.
    """
    arr, scalar = _prepare(g)
    if not np.all(np.isfinite(arr)):
        raise RegularizerDomainError("gradient inverse requires finite arguments")
    lo, hi = pot.gradient_range
    if not np.all((arr > lo) & (arr < hi)):
        raise RegularizerDomainError(f"gradient value outside the range ({lo}, {hi}) of {pot.kind.value}")

    kind = pot.kind
    if kind is PotentialKind.LOG_BARRIER:
        out = -1.0 / arr
    elif kind is PotentialKind.COMP_NEG_SHANNON:
        out = -np.expm1(-arr - 1.0)
    elif kind is PotentialKind.COMP_LOG_BARRIER:
        out = 1.0 - 1.0 / arr
    elif kind is PotentialKind.LOG_BARRIER_PAIR:
        # positive root of g z^2 + (2 - g) z - 1 = 0, written without cancellation
        out = 2.0 / (2.0 - arr + np.hypot(arr, 2.0))
    else:
        start = None if initial is None else np.broadcast_to(np.asarray(initial, dtype=float), arr.shape)
        out = _solve_hybrid(pot, arr, start)
    return _finish(out, scalar)


def _solve_hybrid(
        pot: Potential,
        target: NDArray[np.float64],
        initial: NDArray[np.float64] | None,
) -> NDArray[np.float64]:
    shape = target.shape
    target = np.atleast_1d(target).astype(float)
    lo = np.full_like(target, BRACKET_LO)
    hi = np.full_like(target, BRACKET_HI)
    below = target <= _grad(pot, lo)
    above = target >= _grad(pot, hi)

    if initial is None:
        x = 2.0 / (2.0 - target + np.hypot(target, 2.0))
    else:
        x = np.atleast_1d(initial).astype(float).copy()
    x = np.clip(x, BRACKET_LO, BRACKET_HI)

    pending = ~(below | above)
    for _ in range(MAX_ROOT_ITERATIONS):
        if not pending.any():
            break
        xs = x[pending]
        f = _grad(pot, xs) - target[pending]
        lo_p = np.where(f < 0.0, xs, lo[pending])
        hi_p = np.where(f > 0.0, xs, hi[pending])
        candidate = xs - f / _hess(pot, xs)
        outside = ~np.isfinite(candidate) | (candidate <= lo_p) | (candidate >= hi_p)
        nxt = np.where(outside, 0.5 * (lo_p + hi_p), candidate)
        tol = STEP_RTOL * xs
        converged = (f == 0.0) | (np.abs(nxt - xs) <= tol) | (hi_p - lo_p <= tol)
        nxt = np.where(f == 0.0, xs, nxt)
        x[pending] = nxt
        lo[pending] = lo_p
        hi[pending] = hi_p
        idx = np.flatnonzero(pending)
        pending[idx[converged]] = False
    else:
        if pending.any():
            raise RootFindingError(
                f"gradient inverse of {pot.kind.value} did not converge in {MAX_ROOT_ITERATIONS} iterations",
                details={"targets": target[pending][:3].tolist()},
            )

    x = np.where(below, BRACKET_LO, np.where(above, BRACKET_HI, x))
    if below.any() or above.any():
        logger.debug("gradient inverse saturated for %d of %d targets", int(below.sum() + above.sum()), x.size)
    return x.reshape(shape)


def bregman(pot: Potential, x: ArrayLike, y: ArrayLike) -> Scalar:
    xa, xs = _prepare(x)
    ya, ys = _prepare(y)
    _check_domain(pot, xa)
    _check_domain(pot, ya)
    out = _value(pot, xa) - _value(pot, ya) - _grad(pot, ya) * (xa - ya)
    return _finish(np.maximum(out, 0.0), xs and ys)


def stability_terms(
        pot: Potential,
        q: ArrayLike,
        z: ArrayLike,
        *,
        initial: ArrayLike | None = None,
) -> tuple[Scalar, Scalar]:
    """Return the stability value max_y (q - y) z - D(y, q) together with its maximizer.

    The maximizer solves grad(y) = grad(q) - z; the derivative of the value in ``z``
    is ``q - y``. ``initial`` warm-starts the numerical inverse of the hybrids.
    """
    qa, qs = _prepare(q)
    za, zs = _prepare(z)
    _check_domain(pot, qa)
    qa, za = np.broadcast_arrays(qa, za)
    target = _grad(pot, qa) - za
    try:
        y = np.asarray(grad_inverse(pot, target, initial=initial), dtype=float)
    except RegularizerDomainError as exc:
        raise UnboundedStabilityError(
            f"stability of {pot.kind.value} is unbounded: grad(q) - z leaves the gradient range",
        ) from exc
    # primal form stays a valid lower bound when y saturates at the bracket ends
    divergence = _value(pot, y) - _value(pot, qa) - _grad(pot, qa) * (y - qa)
    value = (qa - y) * za - divergence
    value = np.where(za == 0.0, 0.0, np.maximum(value, 0.0))
    y = np.where(za == 0.0, qa, y)
    scalar = qs and zs
    return _finish(value, scalar), _finish(y, scalar)


def stability(pot: Potential, q: ArrayLike, z: ArrayLike) -> Scalar:
    return stability_terms(pot, q, z)[0]


def stability_argmax(pot: Potential, q: ArrayLike, z: ArrayLike) -> Scalar:
    return stability_terms(pot, q, z)[1]


def xi(x: ArrayLike) -> Scalar:
    arr, scalar = _prepare(x)
    return _finish(np.expm1(-arr) + arr, scalar)


def zeta(x: ArrayLike) -> Scalar:
    arr, scalar = _prepare(x)
    if not np.all(arr > -1.0):
        raise RegularizerDomainError("zeta is defined for x > -1")
    return _finish(arr - np.log1p(arr), scalar)


def stability_closed_form(kind: PotentialKind, q: ArrayLike, z: ArrayLike) -> Scalar:
    """Closed-form stability of the single-component potentials."""
    qa, qs = _prepare(q)
    za, zs = _prepare(z)
    if not np.all((qa > 0.0) & (qa < 1.0)):
        raise RegularizerDomainError("closed-form stability requires q in (0, 1)")
    scalar = qs and zs
    if kind is PotentialKind.COMP_NEG_SHANNON:
        return _finish(np.asarray((1.0 - qa) * xi(-za)), scalar)
    if kind is PotentialKind.LOG_BARRIER:
        if not np.all(za > -1.0 / qa):
            raise UnboundedStabilityError("log-barrier stability requires z > -1/q")
        return _finish(np.asarray(zeta(za * qa)), scalar)
    if kind is PotentialKind.COMP_LOG_BARRIER:
        if not np.all(za < 1.0 / (1.0 - qa)):
            raise UnboundedStabilityError("complement log-barrier stability requires z < 1/(1-q)")
        return _finish(np.asarray(zeta(-za * (1.0 - qa))), scalar)
    raise RegularizerDomainError(f"no closed-form stability for {kind.value}")
