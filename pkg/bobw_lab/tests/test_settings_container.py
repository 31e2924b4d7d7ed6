from __future__ import annotations

import pytest

from bobw_lab import audit, container
from bobw_lab.infrastructure.queue.background import InlineReplicationPool, ProcessReplicationPool, build_pool
from bobw_lab.infrastructure.telemetry.mlflow_adapter import MLflowTelemetryAdapter
from bobw_lab.settings import AppConfig


def _reset(monkeypatch: pytest.MonkeyPatch) -> None:
    for key in ("MLFLOW_TRACKING_URI", "BOBW_WORKERS", "BOBW_LP_DELTA", "BOBW_EXO_PATIENCE"):
        monkeypatch.delenv(key, raising=False)
    container.get_settings.cache_clear()
    container.get_telemetry.cache_clear()
    container.get_run_use_case.cache_clear()
    container.get_analyze_use_case.cache_clear()


def test_settings_defaults(monkeypatch: pytest.MonkeyPatch) -> None:
    _reset(monkeypatch)

    settings = AppConfig.load()

    assert settings.solver.lp_delta == 1e-7
    assert settings.solver.exo_patience == 100
    assert settings.runner.workers == 1
    assert settings.telemetry.enabled is False


def test_settings_read_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    _reset(monkeypatch)
    monkeypatch.setenv("BOBW_LP_DELTA", "1e-6")
    monkeypatch.setenv("BOBW_WORKERS", "0")
    monkeypatch.setenv("BOBW_EXO_PATIENCE", "25")

    settings = AppConfig.load()

    assert settings.solver.lp_delta == 1e-6
    assert settings.solver.exo_patience == 25
    assert settings.runner.workers == 1


def test_telemetry_none_without_tracking_uri(monkeypatch: pytest.MonkeyPatch) -> None:
    _reset(monkeypatch)

    assert container.get_telemetry() is None


def test_telemetry_adapter_with_tracking_uri(monkeypatch: pytest.MonkeyPatch) -> None:
    _reset(monkeypatch)
    monkeypatch.setenv("MLFLOW_TRACKING_URI", "http://localhost:5000")

    assert isinstance(container.get_telemetry(), MLflowTelemetryAdapter)
    container.get_telemetry.cache_clear()
    container.get_settings.cache_clear()


def test_analyze_use_case_uses_configured_delta(monkeypatch: pytest.MonkeyPatch) -> None:
    _reset(monkeypatch)
    monkeypatch.setenv("BOBW_LP_DELTA", "1e-5")

    use_case = container.get_analyze_use_case()

    assert getattr(use_case, "_delta") == 1e-5
    container.get_analyze_use_case.cache_clear()
    container.get_settings.cache_clear()


def test_pool_selection() -> None:
    assert isinstance(build_pool(1), InlineReplicationPool)
    assert build_pool(3).workers == 3
    assert isinstance(build_pool(3), ProcessReplicationPool)
    with pytest.raises(ValueError):
        ProcessReplicationPool(0)


def test_audit_binding_restores_previous_label(caplog) -> None:
    caplog.set_level("INFO", logger="bobw_lab.audit")
    outer = audit.bind_replication("run-a")
    inner = audit.bind_replication("run-a#r1")

    audit.log_solver_event("exo_fallback", round=3)
    audit.reset_replication(inner)

    assert audit.current_replication() == "run-a"
    record = caplog.records[-1]
    assert record.audit == {"event": "exo_fallback", "replication": "run-a#r1", "round": 3}
    audit.reset_replication(outer)
    assert audit.current_replication() == "main"
