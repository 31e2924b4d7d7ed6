from __future__ import annotations

import math

import numpy as np
import pytest

from bobw_lab.domain.errors import ClassificationRefusal, ConfigurationError
from bobw_lab.domain.partial_monitoring.analysis import analyze_game
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.partial_monitoring.global_observable import GlobalPMLearner, default_c1
from bobw_lab.domain.status import EstimatorMode


def _revealing_game() -> PMGame:
    return PMGame.from_symbols([[0, 1], [1, 0], [1, 1]], [["a", "a"], ["a", "a"], ["b", "c"]], name="revealing")


def _oracle(game: PMGame, outcome: int):
    return lambda action: int(game.feedback[action, outcome])


def test_refuses_games_without_global_observability() -> None:
    game = PMGame.from_symbols([[0, 1], [1, 0]], [["a", "a"], ["a", "a"]])

    with pytest.raises(ClassificationRefusal):
        GlobalPMLearner(game, analyze_game(game), horizon=100)


def test_default_mixing_constant() -> None:
    assert default_c1(2.0, 3, 1000) == pytest.approx((6.0 / (3 * math.log(1000))) ** (2.0 / 3.0))


def test_locally_observable_game_runs_on_global_estimators() -> None:
    game = PMGame.from_symbols(1.0 - np.eye(3), [["x0", "x1", "x2"]] * 3)
    analysis = analyze_game(game)

    learner = GlobalPMLearner(game, analysis, horizon=100)

    assert analysis.g_mode is EstimatorMode.LOCAL
    assert learner.analysis.g_mode is EstimatorMode.GLOBAL


def test_first_round_is_uniform() -> None:
    game = PMGame.from_symbols(1.0 - np.eye(3), [["x0", "x1", "x2"]] * 3)
    learner = GlobalPMLearner(game, analyze_game(game), horizon=100)

    record = learner.play_round(_oracle(game, 0), np.random.default_rng(0))

    assert np.allclose(record.q, 1.0 / 3.0, atol=1e-10)
    assert np.allclose(record.p, 1.0 / 3.0, atol=1e-10)
    assert record.z == pytest.approx(1.0, abs=1e-9)
    assert record.z <= 2.0 * np.min(1.0 - record.q) + 1e-12


def test_mixing_rate_clamps_at_one() -> None:
    game = _revealing_game()
    learner = GlobalPMLearner(game, analyze_game(game), horizon=100, c1=1e-6)

    p, mixing, _, clamped = learner.mix_and_rate(np.array([0.5, 0.5, 0.0]))

    assert clamped
    assert mixing == 1.0
    assert np.allclose(p, 1.0 / 3.0)


def test_dominated_action_is_explored_but_not_chosen_by_ftrl() -> None:
    game = _revealing_game()
    learner = GlobalPMLearner(game, analyze_game(game), horizon=50)
    rng = np.random.default_rng(4)

    records = [learner.play_round(_oracle(game, t % 2), rng) for t in range(50)]

    assert all(r.q[2] == 0.0 for r in records)
    assert all(r.p[2] > 0.0 for r in records)
    assert all(0.0 <= r.mixing <= 1.0 for r in records)
    assert learner.cum_z > 0.0


def test_learning_rate_grows_with_cumulative_z() -> None:
    game = _revealing_game()
    learner = GlobalPMLearner(game, analyze_game(game), horizon=20)
    rng = np.random.default_rng(1)

    rates = [learner.play_round(_oracle(game, 0), rng).beta[0] for _ in range(20)]

    assert all(b >= a for a, b in zip(rates, rates[1:]))


def test_invalid_mixing_constant() -> None:
    game = _revealing_game()

    with pytest.raises(ConfigurationError):
        GlobalPMLearner(game, analyze_game(game), horizon=100, c1=-1.0)


def test_mixing_floor_bounds_every_estimate() -> None:
    game = _revealing_game()
    learner = GlobalPMLearner(game, analyze_game(game), horizon=200)
    g_sup = float(np.max(np.abs(learner.g_circ)))
    rng = np.random.default_rng(12)

    for t in range(200):
        record = learner.play_round(_oracle(game, int(rng.integers(2))), rng)

        assert record.mixing > 0.0
        assert np.all(record.p >= record.mixing / game.k - 1e-15)
        assert np.max(np.abs(record.estimate)) <= g_sup * game.k / record.mixing + 1e-9


def test_two_action_ftrl_matches_grid_minimization() -> None:
    game = PMGame.from_symbols([[1, 0], [0, 1]], [["a", "a"], ["b", "c"]])
    learner = GlobalPMLearner(game, analyze_game(game), horizon=1000)
    grid = np.linspace(1e-6, 1.0 - 1e-6, 200_001)
    barrier = -np.log(grid) - np.log1p(-grid)
    rng = np.random.default_rng(8)

    for _ in range(20):
        learner.cum_y = rng.uniform(-5.0, 5.0, 2)
        learner.cum_z = float(rng.uniform(0.0, 50.0))
        # q = (t, 1 - t); the pair potential is symmetric, so both coordinates contribute the same barrier
        values = learner.cum_y[0] * grid + learner.cum_y[1] * (1.0 - grid) + 2.0 * learner.beta * barrier

        q = learner.global_ftrl()

        assert q[0] == pytest.approx(grid[np.argmin(values)], abs=1e-5)
        assert q.sum() == pytest.approx(1.0, abs=1e-10)
