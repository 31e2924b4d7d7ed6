from __future__ import annotations

import math

import numpy as np
import pytest

from bobw_lab.domain.errors import ClassificationRefusal, ConfigurationError
from bobw_lab.domain.partial_monitoring.analysis import analyze_game
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.partial_monitoring.local_observable import LocalPMLearner

FAST_EXO = {"exo_max_iterations": 50, "exo_patience": 10}


def _apple_learner(horizon: int = 100, **kwargs) -> LocalPMLearner:
    game = PMGame.from_symbols([[1, 0], [0, 1]], [["a", "a"], ["b", "c"]], name="apple")
    return LocalPMLearner(game, analyze_game(game), horizon=horizon, **{**FAST_EXO, **kwargs})


def _oracle(game: PMGame, outcome: int):
    return lambda action: int(game.feedback[action, outcome])


def test_refuses_globally_only_games() -> None:
    game = PMGame.from_symbols([[0, 1], [1, 0], [1, 1]], [["a", "a"], ["a", "a"], ["b", "c"]])

    with pytest.raises(ClassificationRefusal) as excinfo:
        LocalPMLearner(game, analyze_game(game), horizon=100)

    assert excinfo.value.exit_code == 2
    assert excinfo.value.details["observability"] == "GloballyOnly"


def test_short_horizon_and_bad_epsilon_are_rejected() -> None:
    with pytest.raises(ConfigurationError):
        _apple_learner(horizon=7)
    with pytest.raises(ConfigurationError):
        _apple_learner(epsilon=0.0)


def test_initial_learning_rates_sit_at_the_floor() -> None:
    learner = _apple_learner()

    assert learner.beta_floor == 16.0
    assert np.allclose(learner.beta, 16.0)


def test_learning_rate_increment() -> None:
    learner = _apple_learner(horizon=100)

    alpha = learner.learning_rate_update(np.array([0.5, 0.5]))

    assert np.allclose(alpha, min(0.5, 1.0 / math.log(100)))
    assert np.allclose(learner.cum_alpha, alpha)


def test_first_ftrl_output_is_uniform_over_pareto() -> None:
    assert np.allclose(_apple_learner().compute_q(), 0.5, atol=1e-10)


def test_round_record_is_consistent() -> None:
    learner = _apple_learner()
    rng = np.random.default_rng(0)

    record = learner.play_round(_oracle(learner.game, 1), rng)

    assert record.round == 1
    assert record.p.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(record.p >= record.q / 2 - 1e-12)
    assert record.symbol == int(learner.game.feedback[record.action, 1])
    assert np.all(np.isfinite(record.estimate))
    assert record.exo is not None and record.exo_bound is not None
    assert learner.round == 1


def test_horizon_is_enforced() -> None:
    learner = _apple_learner(horizon=8)
    rng = np.random.default_rng(0)
    for _ in range(8):
        learner.play_round(_oracle(learner.game, 0), rng)

    with pytest.raises(ConfigurationError):
        learner.play_round(_oracle(learner.game, 0), rng)


def test_replay_is_deterministic() -> None:
    def play() -> list[int]:
        learner = _apple_learner(horizon=20)
        rng = np.random.default_rng(11)
        return [learner.play_round(_oracle(learner.game, t % 2), rng).action for t in range(20)]

    assert play() == play()


def test_single_pareto_action_is_played_every_round() -> None:
    game = PMGame.from_symbols([[0, 0], [1, 1]], [["a", "a"], ["a", "b"]])
    learner = LocalPMLearner(game, analyze_game(game), horizon=10)
    rng = np.random.default_rng(0)

    records = [learner.play_round(_oracle(game, 1), rng) for _ in range(10)]

    assert {r.action for r in records} == {0}
    assert all(r.exo is None for r in records)


def test_mass_moves_to_the_better_action() -> None:
    learner = _apple_learner(horizon=300)
    env_rng = np.random.default_rng(5)
    rng = np.random.default_rng(6)

    for _ in range(300):
        outcome = int(env_rng.random() < 0.7)
        record = learner.play_round(_oracle(learner.game, outcome), rng)

    assert record.q[0] > 0.5
    assert learner.exo_fallbacks == 0
