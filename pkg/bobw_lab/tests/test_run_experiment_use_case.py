from __future__ import annotations

from pathlib import Path

import pytest

from bobw_lab.application.use_cases.run_experiment import RunExperimentUseCase, aggregate, merge_diagnostics
from bobw_lab.domain.entities import ReplicationResult
from bobw_lab.domain.errors import ClassificationRefusal, ConfigurationError, GameAnalysisError, LabError
from bobw_lab.infrastructure.persistence.filesystem import FilesystemArtifactStore
from bobw_lab.infrastructure.queue.background import InlineReplicationPool, build_pool
from bobw_lab.settings import SolverSettings

APPLE = {"loss": [[1, 0], [0, 1]], "feedback": [["a", "a"], ["b", "c"]]}
REVEALING = {"loss": [[0, 1], [1, 0], [1, 1]], "feedback": [["a", "a"], ["a", "a"], ["b", "c"]]}


def _semibandit_config(**overrides) -> dict:
    config = {
        "name": "sb",
        "algorithm": "LBINFV-LS",
        "horizon": 64,
        "replications": 3,
        "base_seed": 7,
        "semibandit": {"d": 3, "m": 1},
        "environment": {"regime": "stochastic", "means": [0.2, 0.5, 0.6]},
    }
    config.update(overrides)
    return config


def _pm_config(algorithm: str, game: dict, **overrides) -> dict:
    config = {
        "name": "pm",
        "algorithm": algorithm,
        "horizon": 16,
        "replications": 2,
        "game": game,
        "environment": {"regime": "stochastic", "nu": [0.3, 0.7]},
        "overrides": {"exo_max_iterations": 50, "exo_patience": 10},
    }
    config.update(overrides)
    return config


class DummyStore:
    def __init__(self) -> None:
        self.saved = []

    def save_run(self, artifact, out_dir: Path) -> Path:
        self.saved.append(artifact)
        return Path(out_dir) / artifact.run_name

    def load_artifact(self, path: Path):  # pragma: no cover - helper
        raise NotImplementedError


class FakeTelemetry:
    def __init__(self) -> None:
        self.calls = []

    def log_experiment_run(self, *, artifact, artifact_dir: Path) -> None:
        self.calls.append((artifact.run_name, artifact_dir))


class ExplodingPool:
    def run(self, handler, jobs):
        raise RuntimeError("worker crashed")


def _use_case(store=None, telemetry=None, pool_factory=None) -> RunExperimentUseCase:
    return RunExperimentUseCase(
        store=store or DummyStore(),
        pool_factory=pool_factory or (lambda _workers: InlineReplicationPool()),
        telemetry=telemetry,
        solver=SolverSettings(),
    )


def _result(replication: int, regret: list[float], **kwargs) -> ReplicationResult:
    return ReplicationResult(replication=replication, seed=replication, checkpoints=[8, 16], regret=regret,
                             expected_regret=regret, **kwargs)


def test_aggregate_statistics() -> None:
    results = [_result(r, [float(r), 2.0 * r]) for r in range(11)]

    summary = aggregate(results)

    assert summary.mean == [5.0, 10.0]
    assert summary.q10 == [1.0, 2.0]
    assert summary.q50 == [5.0, 10.0]
    assert summary.q90 == [9.0, 18.0]


def test_diagnostics_are_summed_and_budget_use_maximized() -> None:
    results = [
        _result(0, [0.0, 0.0], diagnostics={"exo_fallbacks": 1.0}, corruption_spent=3.0),
        _result(1, [0.0, 0.0], diagnostics={"exo_fallbacks": 2.0}, corruption_spent=5.0),
    ]

    assert merge_diagnostics(results) == {"exo_fallbacks": 3.0, "corruption_spent_max": 5.0}


def test_semibandit_run_builds_artifact_and_logs_telemetry(tmp_path) -> None:
    store = DummyStore()
    telemetry = FakeTelemetry()

    artifact = _use_case(store=store, telemetry=telemetry)(_semibandit_config(), out_dir=tmp_path)

    assert artifact.run_name == "sb-T64-seed7"
    assert artifact.checkpoints == [8, 16, 32, 64]
    assert [rep.seed for rep in artifact.replications] == [7, 8, 9]
    assert len(artifact.aggregate.mean) == 4
    assert artifact.timing["workers"] == 1.0
    assert store.saved == [artifact]
    assert telemetry.calls == [(artifact.run_name, tmp_path / artifact.run_name)]


def test_reruns_are_byte_identical(tmp_path) -> None:
    store = FilesystemArtifactStore()
    use_case = _use_case(store=store)

    use_case(_semibandit_config(), out_dir=tmp_path / "first")
    use_case(_semibandit_config(), out_dir=tmp_path / "second")

    for name in ("artifact.json", "regret.csv"):
        first = (tmp_path / "first" / "sb-T64-seed7" / name).read_bytes()
        second = (tmp_path / "second" / "sb-T64-seed7" / name).read_bytes()
        assert first == second


def test_worker_processes_reproduce_inline_results(tmp_path) -> None:
    inline = _use_case()(_semibandit_config(replications=2), out_dir=tmp_path)
    pooled = _use_case(pool_factory=build_pool)(_semibandit_config(replications=2), out_dir=tmp_path, workers=2)

    assert [r.regret for r in inline.replications] == [r.regret for r in pooled.replications]


def test_local_pm_run_reports_exo_diagnostics(tmp_path) -> None:
    artifact = _use_case()(_pm_config("PM-Local", APPLE), out_dir=tmp_path)

    assert artifact.checkpoints == [8, 16]
    assert {"exo_fallbacks", "exo_unconverged", "exo_bound_excesses"} <= set(artifact.diagnostics)


def test_global_pm_run_reports_mixing_diagnostics(tmp_path) -> None:
    artifact = _use_case()(_pm_config("PM-Global", REVEALING), out_dir=tmp_path)

    assert artifact.diagnostics["z_bound_violations"] == 0.0
    assert "gamma_clamps" in artifact.diagnostics


def test_corrupted_run_tracks_budget(tmp_path) -> None:
    config = _semibandit_config(environment={"regime": "corrupted", "means": [0.2, 0.5, 0.6], "budget": 4.0})

    artifact = _use_case()(config, out_dir=tmp_path)

    assert 0.0 < artifact.diagnostics["corruption_spent_max"] <= 4.0


def test_refusal_happens_before_any_replication(tmp_path) -> None:
    calls = []

    def pool_factory(workers):
        calls.append(workers)
        return InlineReplicationPool()

    with pytest.raises(ClassificationRefusal):
        _use_case(pool_factory=pool_factory)(_pm_config("PM-Local", REVEALING), out_dir=tmp_path)

    assert calls == []


def test_degenerate_game_is_refused(tmp_path) -> None:
    degenerate = {"loss": [[0, 1], [1, 0], [0.5, 0.5]], "feedback": [["a", "b"]] * 3}
    with pytest.raises(GameAnalysisError):
        _use_case()(_pm_config("PM-Global", degenerate), out_dir=tmp_path)


def test_invalid_config_is_a_configuration_error(tmp_path) -> None:
    with pytest.raises(ConfigurationError):
        _use_case()(_semibandit_config(horizon=0), out_dir=tmp_path)


def test_worker_crash_becomes_lab_error(tmp_path) -> None:
    with pytest.raises(LabError) as excinfo:
        _use_case(pool_factory=lambda _w: ExplodingPool())(_semibandit_config(), out_dir=tmp_path)

    assert excinfo.value.exit_code == 1
    assert "worker crashed" in str(excinfo.value)
