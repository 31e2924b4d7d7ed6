from __future__ import annotations

import logging
from pathlib import Path

from bobw_lab.domain.errors import SolverError
from bobw_lab.domain.partial_monitoring.analysis import (
    DELTA,
    GameAnalysis,
    analyze_game,
    estimator_residual,
    verify_estimator,
    verify_g_circ,
)
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.ports import GameSourcePort
from bobw_lab.schemas import EdgeReport, GameReport

logger = logging.getLogger(__name__)


def build_report(game: PMGame, analysis: GameAnalysis, *, include_estimators: bool = False) -> GameReport:
    edges: list[EdgeReport] = []
    for edge in analysis.neighbors:
        w_local = analysis.local_estimators.get(edge)
        w_global = analysis.global_estimators.get(edge)
        for label, w in (("local", w_local), ("global", w_global)):
            if w is not None and not verify_estimator(game, edge, w):
                raise SolverError(f"{label} estimator for edge {edge} fails the loss-difference identity")
        edges.append(EdgeReport(
            edge=edge,
            local_residual=None if w_local is None else estimator_residual(game, edge, w_local),
            global_residual=None if w_global is None else estimator_residual(game, edge, w_global),
            local_estimator=w_local.tolist() if include_estimators and w_local is not None else None,
            global_estimator=w_global.tolist() if include_estimators and w_global is not None else None,
        ))
    if analysis.g_circ is not None and not verify_g_circ(game, analysis.pareto, analysis.g_circ):
        raise SolverError("G° fails the loss-difference identity")

    return GameReport(
        name=game.name,
        k=game.k,
        d=game.d,
        m=analysis.m,
        symbols=list(game.symbols),
        observability=analysis.observability.value,
        pareto=list(analysis.pareto),
        dominated=[a for a, flag in enumerate(analysis.cells.dominated) if flag],
        degenerate=[a for a, flag in enumerate(analysis.cells.degenerate) if flag],
        duplicate=[a for a, flag in enumerate(analysis.cells.duplicate) if flag],
        neighbors=list(analysis.neighbors),
        root=analysis.root,
        in_tree=list(analysis.in_tree),
        g_mode=None if analysis.g_mode is None else analysis.g_mode.value,
        g_circ_norm=analysis.g_circ_norm,
        c_g=analysis.c_g,
        g_circ=analysis.g_circ.tolist() if include_estimators and analysis.g_circ is not None else None,
        h_null_basis=[h.tolist() for h in analysis.h_null_basis] if include_estimators else [],
        edges=edges,
        borderline=list(analysis.cells.borderline),
    )


class AnalyzeGameUseCase:
    """Parses a game file and reports its cell decomposition and observability class."""

    def __init__(self, *, source: GameSourcePort, delta: float = DELTA) -> None:
        self._source = source
        self._delta = delta

    def __call__(self, path: Path, *, include_estimators: bool = False) -> GameReport:
        game = self._source.load(Path(path))
        analysis = analyze_game(game, delta=self._delta)
        report = build_report(game, analysis, include_estimators=include_estimators)
        logger.info("game %s is %s with Pareto set %s", report.name or path, report.observability, report.pareto)
        return report
