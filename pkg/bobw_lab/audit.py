from __future__ import annotations

import logging
from contextvars import ContextVar, Token
from typing import Any

audit_logger = logging.getLogger("bobw_lab.audit")
_replication: ContextVar[str] = ContextVar("audit_replication", default="main")


def bind_replication(label: str | None) -> Token:
    """Bind the current replication label for downstream logging."""
    return _replication.set(label or "main")


def reset_replication(token: Token) -> None:
    """Restore the previous replication binding."""
    try:
        _replication.reset(token)
    except (LookupError, ValueError):
        pass


def current_replication() -> str:
    return _replication.get()


def log_solver_event(event: str, **details: Any) -> None:
    payload: dict[str, Any] = {
        "event": event,
        "replication": current_replication(),
    }
    payload.update(details)
    audit_logger.info("solver_event", extra={"audit": payload})


def log_run_access(action: str, *, run_id: str, details: dict[str, Any] | None = None) -> None:
    payload: dict[str, Any] = {
        "event": "run_access",
        "replication": current_replication(),
        "action": action,
        "run_id": run_id,
    }
    if details:
        payload.update(details)
    audit_logger.info("run_access", extra={"audit": payload})
