from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from bobw_lab.application.use_cases.analyze_game import AnalyzeGameUseCase, build_report
from bobw_lab.domain.errors import SolverError
from bobw_lab.domain.partial_monitoring.analysis import analyze_game
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.infrastructure.games.loader import JsonGameLoader


class InMemoryGameSource:
    def __init__(self, game: PMGame) -> None:
        self.game = game
        self.paths: list[Path] = []

    def load(self, path: Path) -> PMGame:
        self.paths.append(path)
        return self.game


def _apple() -> PMGame:
    return PMGame.from_symbols([[1, 0], [0, 1]], [["a", "a"], ["b", "c"]], name="apple")


def test_report_for_apple_tasting() -> None:
    source = InMemoryGameSource(_apple())

    report = AnalyzeGameUseCase(source=source)("games/apple.json")

    assert source.paths == [Path("games/apple.json")]
    assert report.observability == "Locally"
    assert report.pareto == [0, 1]
    assert report.neighbors == [(0, 1)]
    assert report.in_tree == [(1, 0)]
    assert report.g_mode == "local"
    assert report.edges[0].local_residual <= 1e-9
    assert report.edges[0].local_estimator is None


def test_report_can_include_estimator_tables() -> None:
    game = _apple()

    report = build_report(game, analyze_game(game), include_estimators=True)

    table = np.asarray(report.edges[0].local_estimator)
    assert table.shape == (game.k, game.sigma_count)
    assert np.max(np.abs(table)) == pytest.approx(1.0, abs=1e-9)


def test_report_can_include_g_circ_and_the_null_space_basis() -> None:
    game = _apple()
    analysis = analyze_game(game)

    full = build_report(game, analysis, include_estimators=True)
    brief = build_report(game, analysis)

    assert np.array_equal(np.asarray(full.g_circ), analysis.g_circ)
    assert len(full.h_null_basis) == len(analysis.h_null_basis) == 4
    assert np.asarray(full.h_null_basis).shape == (4, game.k, game.sigma_count, game.k)
    assert full.degenerate == [] and full.duplicate == []
    assert brief.g_circ is None and brief.h_null_basis == []
    assert brief.g_circ_norm == pytest.approx(full.g_circ_norm)


def test_report_lists_dominated_actions() -> None:
    game = PMGame.from_symbols([[0, 1], [1, 0], [1, 1]], [["a", "a"], ["a", "a"], ["b", "c"]])

    report = build_report(game, analyze_game(game))

    assert report.observability == "GloballyOnly"
    assert report.dominated == [2]
    assert report.edges[0].local_residual is None
    assert report.c_g >= 1.0


def test_broken_estimator_is_a_solver_fault() -> None:
    game = _apple()
    analysis = analyze_game(game)
    analysis.local_estimators[(0, 1)] = np.zeros((game.k, game.sigma_count))

    with pytest.raises(SolverError) as excinfo:
        build_report(game, analysis)

    assert excinfo.value.exit_code == 1


@pytest.mark.parametrize(("file_name", "observability", "dominated"), [
    ("apple_tasting.json", "Locally", []),
    ("revealing_action.json", "GloballyOnly", [2]),
])
def test_shipped_games_classify(file_name: str, observability: str, dominated: list[int]) -> None:
    path = Path(__file__).resolve().parents[2] / "games" / file_name

    report = AnalyzeGameUseCase(source=JsonGameLoader())(path)

    assert report.observability == observability
    assert report.dominated == dominated
