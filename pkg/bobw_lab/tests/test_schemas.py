from __future__ import annotations

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from bobw_lab.application.use_cases.run_experiment import parse_config
from bobw_lab.domain.errors import ConfigurationError
from bobw_lab.domain.status import Algorithm
from bobw_lab.schemas import AdversarialEnvSpec, CorruptedEnvSpec, ExperimentConfig, GameSpec

APPLE = {"loss": [[1, 0], [0, 1]], "feedback": [["a", "a"], ["b", "c"]]}


def _semibandit(**overrides) -> dict:
    config = {
        "algorithm": "LBINFV-LS",
        "horizon": 100,
        "semibandit": {"d": 3, "m": 1},
        "environment": {"regime": "stochastic", "means": [0.2, 0.5, 0.5]},
    }
    config.update(overrides)
    return config


def test_semibandit_config_defaults() -> None:
    config = ExperimentConfig.model_validate(_semibandit())

    assert config.algorithm is Algorithm.LBINFV_LS
    assert config.replications == 1
    assert config.run_name == "lbinfv-ls-T100-seed0"
    assert config.overrides.epsilon is None


def test_environment_is_discriminated_by_regime() -> None:
    corrupted = ExperimentConfig.model_validate(_semibandit(
        environment={"regime": "corrupted", "means": [0.2, 0.5, 0.5], "budget": 10},
    ))
    adversarial = ExperimentConfig.model_validate(_semibandit(
        environment={"regime": "adversarial", "patterns": [[0, 1, 1], [1, 0, 0]]},
    ))

    assert isinstance(corrupted.environment, CorruptedEnvSpec)
    assert isinstance(adversarial.environment, AdversarialEnvSpec)


def test_partial_monitoring_config_with_inline_game() -> None:
    config = ExperimentConfig.model_validate({
        "name": "apple",
        "algorithm": "PM-Local",
        "horizon": 64,
        "game": APPLE,
        "environment": {"regime": "stochastic", "nu": [0.3, 0.7]},
    })

    assert isinstance(config.game, GameSpec)
    assert config.run_name == "apple-T64-seed0"


@pytest.mark.parametrize(
    "config",
    [
        _semibandit(semibandit=None),
        _semibandit(game=APPLE),
        _semibandit(environment={"regime": "stochastic", "nu": [0.5, 0.5]}),
        _semibandit(environment={"regime": "stochastic", "means": [0.2, 1.5, 0.5]}),
        _semibandit(environment={"regime": "adversarial", "patterns": [0, 1]}),
        _semibandit(semibandit={"d": 3, "m": 4}),
        _semibandit(semibandit={"d": 2, "kind": "vertices", "vertices": [[1, 2]]}),
        _semibandit(horizon=1),
        _semibandit(overrides={"eta": 0.5}),
        {"algorithm": "PM-Local", "horizon": 4, "game": APPLE,
         "environment": {"regime": "stochastic", "nu": [0.3, 0.7]}},
        {"algorithm": "PM-Global", "horizon": 100, "environment": {"regime": "stochastic", "nu": [0.3, 0.7]}},
    ],
)
def test_invalid_configs_are_rejected(config: dict) -> None:
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(config)


def test_parse_config_reports_the_failing_field() -> None:
    with pytest.raises(ConfigurationError) as excinfo:
        parse_config(_semibandit(horizon="many"))

    assert "horizon" in str(excinfo.value)
    assert excinfo.value.exit_code == 2
    assert excinfo.value.details["errors"]


def test_game_spec_requires_matching_shapes() -> None:
    with pytest.raises(ValidationError):
        GameSpec.model_validate({"loss": [[0, 1], [1]], "feedback": [["a", "a"], ["a"]]})
    with pytest.raises(ValidationError):
        GameSpec.model_validate({"loss": [[0, 1], [1, 0]], "feedback": [["a", ""], ["a", "b"]]})


def test_shipped_configs_validate() -> None:
    config_dir = Path(__file__).resolve().parents[2] / "configs"
    paths = sorted(config_dir.glob("*.json"))

    assert paths
    for path in paths:
        config = parse_config(json.loads(path.read_text(encoding="utf-8")))
        if isinstance(config.game, str):
            assert (config_dir / config.game).is_file()
