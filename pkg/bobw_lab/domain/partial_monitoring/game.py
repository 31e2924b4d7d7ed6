from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from bobw_lab.domain.errors import GameFormatError


@dataclass(frozen=True, eq=False)
class PMGame:
    """Finite partial-monitoring game: ``loss[a, x]`` in [0, 1] and symbol codes ``feedback[a, x]``."""

    loss: NDArray[np.float64]
    feedback: NDArray[np.int64]
    symbols: tuple[str, ...]
    name: str = ""
    _row_symbols: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        loss = np.asarray(self.loss, dtype=float)
        feedback = np.asarray(self.feedback, dtype=np.int64)
        if loss.ndim != 2 or loss.shape[0] < 2 or loss.shape[1] < 2:
            raise GameFormatError(f"loss must be a k x d matrix with k, d >= 2, got shape {loss.shape}")
        if feedback.shape != loss.shape:
            raise GameFormatError(f"feedback shape {feedback.shape} does not match loss shape {loss.shape}")
        bad = np.argwhere(~np.isfinite(loss) | (loss < 0.0) | (loss > 1.0))
        if bad.size:
            a, x = (int(v) for v in bad[0])
            raise GameFormatError(f"loss[{a}][{x}] = {loss[a, x]!r} is outside [0, 1]", cell=(a, x))
        if feedback.min() < 0 or feedback.max() >= len(self.symbols):
            raise GameFormatError("feedback codes must index the symbol alphabet")
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "feedback", feedback)
        object.__setattr__(self, "_row_symbols", tuple(tuple(int(s) for s in np.unique(row)) for row in feedback))

    @classmethod
    def from_symbols(cls, loss: ArrayLike, feedback: Sequence[Sequence[str]], *, name: str = "") -> "PMGame":
        loss_arr = np.asarray(loss, dtype=float)
        rows = [list(row) for row in feedback]
        if loss_arr.ndim != 2 or len(rows) != loss_arr.shape[0]:
            raise GameFormatError(f"feedback has {len(rows)} rows but loss has shape {loss_arr.shape}")
        alphabet: dict[str, int] = {}
        codes = np.zeros(loss_arr.shape, dtype=np.int64)
        for a, row in enumerate(rows):
            if len(row) != loss_arr.shape[1]:
                raise GameFormatError(f"feedback row {a} has {len(row)} entries, expected {loss_arr.shape[1]}",
                                      cell=(a, min(len(row), loss_arr.shape[1])))
            for x, symbol in enumerate(row):
                if not isinstance(symbol, str) or not symbol:
                    raise GameFormatError(f"feedback[{a}][{x}] = {symbol!r} is not a symbol string", cell=(a, x))
                codes[a, x] = alphabet.setdefault(symbol, len(alphabet))
        return cls(loss=loss_arr, feedback=codes, symbols=tuple(alphabet), name=name)

    @property
    def k(self) -> int:
        return int(self.loss.shape[0])

    @property
    def d(self) -> int:
        return int(self.loss.shape[1])

    @property
    def sigma_count(self) -> int:
        return len(self.symbols)

    @property
    def m(self) -> int:
        """Largest number of distinct symbols emitted by a single action."""
        return max(len(row) for row in self._row_symbols)

    def row_symbols(self, a: int) -> tuple[int, ...]:
        return self._row_symbols[a]

    def symbol(self, a: int, x: int) -> str:
        return self.symbols[int(self.feedback[a, x])]

    def feedback_rows(self) -> list[list[str]]:
        return [[self.symbol(a, x) for x in range(self.d)] for a in range(self.k)]

    def evaluate(self, table: NDArray[np.float64]) -> NDArray[np.float64]:
        """Read a function on [k] x Sigma (array of shape (k, |Sigma|, ...)) at every (a, Phi[a, x]).

        The result has shape (k, d, ...).
        """
        return table[np.arange(self.k)[:, None], self.feedback]
