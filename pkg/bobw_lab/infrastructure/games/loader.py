"""JSON game files: ``{"name": ..., "loss": [[...]], "feedback": [["sym", ...], ...]}``."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from pydantic import ValidationError

from bobw_lab.domain.errors import GameFormatError
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.ports import GameSourcePort
from bobw_lab.schemas import GameSpec

logger = logging.getLogger(__name__)


def _cell_from_location(location: tuple) -> tuple[int, int] | None:
    indices = [part for part in location[1:] if isinstance(part, int)]
    if location and location[0] in ("loss", "feedback") and len(indices) >= 2:
        return indices[0], indices[1]
    return None


def game_from_spec(spec: GameSpec, *, name: str | None = None) -> PMGame:
    return PMGame.from_symbols(spec.loss, spec.feedback, name=spec.name or name or "")


def parse_game(text: str, *, source: str = "<string>") -> PMGame:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFormatError(f"{source}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    try:
        spec = GameSpec.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = tuple(first.get("loc", ()))
        cell = _cell_from_location(location)
        where = f" at cell {cell}" if cell else ""
        raise GameFormatError(
            f"{source}: {'.'.join(str(p) for p in location) or 'game'}{where}: {first.get('msg')}",
            cell=cell,
        ) from exc
    return game_from_spec(spec, name=Path(source).stem)


class JsonGameLoader(GameSourcePort):
    def load(self, path: Path) -> PMGame:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise GameFormatError(f"cannot read game file {path}: {exc}") from exc
        game = parse_game(text, source=str(path))
        logger.info("loaded game %s (k=%d, d=%d) from %s", game.name, game.k, game.d, path)
        return game
