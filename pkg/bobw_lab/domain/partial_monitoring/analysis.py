"""Cell geometry, observability and loss-difference estimators of a partial-monitoring game.

Functions on [k] x Sigma are stored as dense tables of shape ``(k, |Sigma|)`` (edge
estimators) or ``(k, |Sigma|, k)`` (vector-valued estimators such as G°); entries for
symbols an action never emits are kept at zero.
"""

from __future__ import annotations

import dataclasses
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import lstsq, null_space, pinv
from scipy.optimize import linprog

from bobw_lab.domain.errors import GameAnalysisError, SolverError
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.status import EstimatorMode, Observability

logger = logging.getLogger(__name__)

DELTA = 1e-7
ESTIMATOR_TOL = 1e-9
BORDERLINE_FACTOR = 10.0

Edge = tuple[int, int]


@dataclass(frozen=True, slots=True)
class CellReport:
    pareto: tuple[int, ...]
    neighbors: tuple[Edge, ...]
    dominated: tuple[bool, ...]
    degenerate: tuple[bool, ...]
    duplicate: tuple[bool, ...]
    pareto_slack: tuple[float, ...]
    neighbor_slack: dict[Edge, float]
    borderline: tuple[str, ...]


def _max_slack(
        d: int,
        lower_rows: Sequence[NDArray[np.float64]],
        *,
        equality_rows: Sequence[NDArray[np.float64]] = (),
        interior: bool,
) -> float:
    """max s over u in the simplex with row @ u >= s for every row (and u >= s when ``interior``)."""
    n = d + 1
    objective = np.zeros(n)
    objective[-1] = -1.0
    upper: list[NDArray[np.float64]] = [np.concatenate([-row, [1.0]]) for row in lower_rows]
    if interior:
        for x in range(d):
            row = np.zeros(n)
            row[x] = -1.0
            row[-1] = 1.0
            upper.append(row)
    equalities = [np.concatenate([np.ones(d), [0.0]])] + [np.concatenate([row, [0.0]]) for row in equality_rows]
    rhs = np.zeros(len(equalities))
    rhs[0] = 1.0
    bounds = [(None, None) if interior else (0.0, None)] * d + [(None, 2.0)]
    result = linprog(
        objective,
        A_ub=np.vstack(upper) if upper else None,
        b_ub=np.zeros(len(upper)) if upper else None,
        A_eq=np.vstack(equalities),
        b_eq=rhs,
        bounds=bounds,
        method="highs",
    )
    if result.status == 2:
        return -np.inf
    if result.status != 0:
        raise SolverError(f"cell linear program failed: {result.message}")
    return float(-result.fun)


def _is_borderline(slack: float, delta: float) -> bool:
    return delta <= abs(slack) < BORDERLINE_FACTOR * delta


def analyze_cells(game: PMGame, *, delta: float = DELTA, reject: bool = True) -> CellReport:
    k, d = game.k, game.d
    duplicate = [False] * k
    duplicate_pairs: list[Edge] = []
    for a in range(k):
        for b in range(a + 1, k):
            if np.array_equal(game.loss[a], game.loss[b]):
                duplicate[a] = duplicate[b] = True
                duplicate_pairs.append((a, b))
    if reject and duplicate_pairs:
        raise GameAnalysisError("game contains duplicate actions", details={"duplicates": duplicate_pairs})

    borderline: list[str] = []
    dominated, degenerate, pareto_slack = [False] * k, [False] * k, [0.0] * k
    pareto: list[int] = []
    for a in range(k):
        rows = [game.loss[b] - game.loss[a] for b in range(k) if b != a and not np.array_equal(game.loss[b], game.loss[a])]
        empty_slack = _max_slack(d, rows, interior=False)
        full_slack = _max_slack(d, rows, interior=True)
        pareto_slack[a] = full_slack
        if full_slack >= delta:
            pareto.append(a)
        elif empty_slack < -delta:
            dominated[a] = True
        else:
            degenerate[a] = True
        for label, slack in (("pareto", full_slack), ("cell", empty_slack)):
            if _is_borderline(slack, delta):
                borderline.append(f"action {a}: {label} slack {slack:.3e} is within {BORDERLINE_FACTOR:g} delta")
    if reject and any(degenerate):
        raise GameAnalysisError(
            "game contains degenerate actions",
            details={"degenerate": [a for a in range(k) if degenerate[a]]},
        )

    neighbors: list[Edge] = []
    neighbor_slack: dict[Edge, float] = {}
    for i, a in enumerate(pareto):
        for b in pareto[i + 1:]:
            rows = [game.loss[c] - game.loss[a] for c in pareto if c not in (a, b)]
            slack = _max_slack(d, rows, equality_rows=[game.loss[a] - game.loss[b]], interior=True)
            neighbor_slack[(a, b)] = slack
            if slack >= delta:
                neighbors.append((a, b))
            if _is_borderline(slack, delta):
                borderline.append(f"pair ({a}, {b}): face slack {slack:.3e} is within {BORDERLINE_FACTOR:g} delta")

    for message in borderline:
        logger.warning("borderline classification: %s", message)
    return CellReport(
        pareto=tuple(pareto),
        neighbors=tuple(neighbors),
        dominated=tuple(dominated),
        degenerate=tuple(degenerate),
        duplicate=tuple(duplicate),
        pareto_slack=tuple(pareto_slack),
        neighbor_slack=neighbor_slack,
        borderline=tuple(borderline),
    )


def _estimator_system(game: PMGame, rows: Iterable[int]) -> tuple[NDArray[np.float64], list[tuple[int, int]]]:
    unknowns = [(c, s) for c in sorted(set(rows)) for s in game.row_symbols(c)]
    index = {u: i for i, u in enumerate(unknowns)}
    matrix = np.zeros((game.d, len(unknowns)))
    for x in range(game.d):
        for c in sorted(set(rows)):
            matrix[x, index[(c, int(game.feedback[c, x]))]] = 1.0
    return matrix, unknowns


def estimator_residual(game: PMGame, edge: Edge, w: NDArray[np.float64]) -> float:
    a, b = edge
    reconstructed = game.evaluate(w).sum(axis=0)
    return float(np.max(np.abs(reconstructed - (game.loss[a] - game.loss[b]))))


def solve_edge_estimators(game: PMGame, edge: Edge, mode: EstimatorMode) -> NDArray[np.float64] | None:
    """Smallest sup-norm w with sum_c w(c, Phi[c, x]) = L[a, x] - L[b, x]; None when infeasible."""
    a, b = edge
    rows = (a, b) if mode is EstimatorMode.LOCAL else range(game.k)
    matrix, unknowns = _estimator_system(game, rows)
    target = game.loss[a] - game.loss[b]
    n = len(unknowns)

    least_squares = lstsq(matrix, target)[0]
    if np.max(np.abs(matrix @ least_squares - target)) > ESTIMATOR_TOL:
        return None

    objective = np.zeros(n + 1)
    objective[-1] = 1.0
    identity = np.eye(n)
    bound_rows = np.vstack([
        np.hstack([identity, -np.ones((n, 1))]),
        np.hstack([-identity, -np.ones((n, 1))]),
    ])
    result = linprog(
        objective,
        A_ub=bound_rows,
        b_ub=np.zeros(2 * n),
        A_eq=np.hstack([matrix, np.zeros((game.d, 1))]),
        b_eq=target,
        bounds=[(None, None)] * n + [(0.0, None)],
        method="highs",
    )
    if result.status == 0:
        solution = result.x[:n]
        solution = solution + pinv(matrix) @ (target - matrix @ solution)
        if np.max(np.abs(matrix @ solution - target)) > ESTIMATOR_TOL:
            solution = least_squares
    else:
        logger.warning("sup-norm estimator program for edge %s ended with status %s; using least squares",
                       edge, result.status)
        solution = least_squares

    table = np.zeros((game.k, game.sigma_count))
    for (c, s), value in zip(unknowns, solution):
        table[c, s] = value
    return table


def verify_estimator(game: PMGame, edge: Edge, w: NDArray[np.float64], *, tol: float = ESTIMATOR_TOL) -> bool:
    return estimator_residual(game, edge, w) <= tol


def g_circ_residual(game: PMGame, pareto: Sequence[int], g: NDArray[np.float64]) -> float:
    """Largest violation of (e_b - e_c) . sum_a G(a, Phi[a, x]) = L[b, x] - L[c, x] over Pareto b, c."""
    totals = game.evaluate(g).sum(axis=0)  # (d, k)
    worst = 0.0
    for b in pareto:
        for c in pareto:
            diff = totals[:, b] - totals[:, c] - (game.loss[b] - game.loss[c])
            worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def verify_g_circ(game: PMGame, pareto: Sequence[int], g: NDArray[np.float64], *, tol: float = ESTIMATOR_TOL) -> bool:
    return g_circ_residual(game, pareto, g) <= tol


def build_in_tree(pareto: Sequence[int], neighbors: Sequence[Edge]) -> tuple[int, tuple[Edge, ...]]:
    """Breadth-first in-tree rooted at the lowest-index Pareto action; edges are (child, parent)."""
    root = min(pareto)
    adjacency: dict[int, list[int]] = {a: [] for a in pareto}
    for a, b in neighbors:
        adjacency[a].append(b)
        adjacency[b].append(a)
    parent: dict[int, int] = {}
    seen = {root}
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for nxt in sorted(adjacency[node]):
            if nxt not in seen:
                seen.add(nxt)
                parent[nxt] = node
                queue.append(nxt)
    if seen != set(pareto):
        raise GameAnalysisError(
            "neighbor graph over the Pareto actions is not connected",
            details={"unreached": sorted(set(pareto) - seen)},
        )
    return root, tuple(sorted(parent.items()))


def h_nullspace_basis(
        game: PMGame,
        pareto: Sequence[int],
        rows: Sequence[int] | None = None,
) -> tuple[NDArray[np.float64], ...]:
    """Basis of the functions N with (e_b - e_c) . sum_a N(a, Phi[a, x]) = 0 for all Pareto b, c and all x."""
    rows = list(range(game.k)) if rows is None else sorted(rows)
    pareto = list(pareto)
    unknowns = [(a, s, b) for a in rows for s in game.row_symbols(a) for b in pareto]
    index = {u: i for i, u in enumerate(unknowns)}
    reference = pareto[0]

    constraints = np.zeros(((len(pareto) - 1) * game.d, len(unknowns)))
    for i, b in enumerate(pareto[1:]):
        for x in range(game.d):
            row = i * game.d + x
            for a in rows:
                s = int(game.feedback[a, x])
                constraints[row, index[(a, s, b)]] += 1.0
                constraints[row, index[(a, s, reference)]] -= 1.0

    basis = np.eye(len(unknowns)) if constraints.shape[0] == 0 else null_space(constraints)
    tables = []
    for column in basis.T:
        table = np.zeros((game.k, game.sigma_count, game.k))
        for (a, s, b), value in zip(unknowns, column):
            table[a, s, b] = value
        tables.append(table)
    return tuple(tables)


@dataclass(frozen=True)
class GameAnalysis:
    cells: CellReport
    observability: Observability
    root: int
    in_tree: tuple[Edge, ...]
    local_estimators: dict[Edge, NDArray[np.float64]]
    global_estimators: dict[Edge, NDArray[np.float64]]
    m: int
    k: int
    delta: float = DELTA
    g_mode: EstimatorMode | None = None
    g_circ: NDArray[np.float64] | None = None
    c_g: float | None = None
    h_null_basis: tuple[NDArray[np.float64], ...] = field(default_factory=tuple)

    @property
    def pareto(self) -> tuple[int, ...]:
        return self.cells.pareto

    @property
    def neighbors(self) -> tuple[Edge, ...]:
        return self.cells.neighbors

    @property
    def w(self) -> dict[Edge, NDArray[np.float64]]:
        if self.g_mode is EstimatorMode.LOCAL:
            return self.local_estimators
        return self.global_estimators

    @property
    def g_circ_norm(self) -> float | None:
        if self.g_circ is None:
            return None
        return float(np.max(np.abs(self.g_circ)))


def _oriented(estimators: dict[Edge, NDArray[np.float64]], child: int, parent: int) -> NDArray[np.float64]:
    if (child, parent) in estimators:
        return estimators[(child, parent)]
    if (parent, child) in estimators:
        return -estimators[(parent, child)]
    raise SolverError(f"no estimator available for tree edge ({child}, {parent})")


def build_g_circ(
        game: PMGame,
        analysis: GameAnalysis,
        *,
        mode: EstimatorMode,
) -> tuple[NDArray[np.float64], float]:
    """Sum edge estimators along each Pareto action's path to the root; returns (G°, c_G)."""
    estimators = analysis.local_estimators if mode is EstimatorMode.LOCAL else analysis.global_estimators
    parent = dict(analysis.in_tree)
    g = np.zeros((game.k, game.sigma_count, game.k))
    for b in analysis.pareto:
        node = b
        while node != analysis.root:
            g[:, :, b] += _oriented(estimators, node, parent[node])
            node = parent[node]
    residual = g_circ_residual(game, analysis.pareto, g)
    if residual > ESTIMATOR_TOL:
        raise SolverError(f"G° violates the loss-difference identity by {residual:.3e}")
    c_g = max(1.0, game.k * float(np.max(np.abs(g))))
    return g, c_g


def with_g_mode(game: PMGame, analysis: GameAnalysis, mode: EstimatorMode) -> GameAnalysis:
    if analysis.g_mode is mode:
        return analysis
    if not analysis.observability.globally_observable:
        raise GameAnalysisError("game is not globally observable; no G° exists")
    g, c_g = build_g_circ(game, analysis, mode=mode)
    return dataclasses.replace(analysis, g_mode=mode, g_circ=g, c_g=c_g)


def analyze_game(game: PMGame, *, delta: float = DELTA) -> GameAnalysis:
    cells = analyze_cells(game, delta=delta)
    if not cells.pareto:
        raise GameAnalysisError("game has no Pareto-optimal action")
    root, in_tree = build_in_tree(cells.pareto, cells.neighbors)

    local: dict[Edge, NDArray[np.float64]] = {}
    global_: dict[Edge, NDArray[np.float64]] = {}
    for edge in cells.neighbors:
        w_local = solve_edge_estimators(game, edge, EstimatorMode.LOCAL)
        w_global = solve_edge_estimators(game, edge, EstimatorMode.GLOBAL)
        if w_local is not None:
            local[edge] = w_local
            if w_global is None:
                logger.warning("edge %s is locally but not globally estimable; reusing the local estimator", edge)
                w_global = w_local
        if w_global is not None:
            global_[edge] = w_global

    if len(local) == len(cells.neighbors):
        observability = Observability.LOCALLY
    elif len(global_) == len(cells.neighbors):
        observability = Observability.GLOBALLY_ONLY
    else:
        observability = Observability.NOT_GLOBAL

    analysis = GameAnalysis(
        cells=cells,
        observability=observability,
        root=root,
        in_tree=in_tree,
        local_estimators=local,
        global_estimators=global_,
        m=game.m,
        k=game.k,
        delta=delta,
    )
    logger.info(
        "analyzed game %s: k=%d d=%d pareto=%s neighbors=%d observability=%s",
        game.name or "<unnamed>", game.k, game.d, list(cells.pareto), len(cells.neighbors), observability.value,
    )
    if not observability.globally_observable:
        return analysis

    mode = EstimatorMode.LOCAL if observability is Observability.LOCALLY else EstimatorMode.GLOBAL
    analysis = with_g_mode(game, analysis, mode)
    return dataclasses.replace(analysis, h_null_basis=h_nullspace_basis(game, cells.pareto))
