"""Match outcomes and normalized outcome probability triples."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

PROB_TOL = 1e-9


class Outcome(enum.IntEnum):
    """Full-time result from the home side's perspective.

    The integer values double as class indices everywhere (forest labels,
    confusion-matrix axes, meta-feature offsets) and define the tie-break
    order ``HOMEWIN < DRAW < AWAYWIN``.
    """

    HOMEWIN = 0
    DRAW = 1
    AWAYWIN = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_score(cls, home_goals: int, away_goals: int) -> "Outcome":
        if home_goals > away_goals:
            return cls.HOMEWIN
        if home_goals == away_goals:
            return cls.DRAW
        return cls.AWAYWIN

    @classmethod
    def parse(cls, value: "str | int | Outcome") -> "Outcome":
        if isinstance(value, Outcome):
            return value
        if isinstance(value, str):
            return cls[value.strip().upper()]
        return cls(int(value))


OUTCOMES = tuple(Outcome)


def argmax_outcome(values: Iterable[float]) -> Outcome:
    """Index of the largest value; earliest outcome wins ties."""
    vals = list(values)
    if len(vals) != 3:
        raise ValueError(f"expected 3 values, got {len(vals)}")
    best = 0
    for i in (1, 2):
        if vals[i] > vals[best]:
            best = i
    return Outcome(best)


@dataclass(frozen=True)
class OutcomeProbs:
    """Probability triple over (homewin, draw, awaywin), summing to one."""

    p_home: float
    p_draw: float
    p_away: float

    def __post_init__(self) -> None:
        vals = (self.p_home, self.p_draw, self.p_away)
        if any(not np.isfinite(v) or v < 0.0 or v > 1.0 + PROB_TOL for v in vals):
            raise ValueError(f"probabilities out of range: {vals}")
        if abs(sum(vals) - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities do not sum to 1: {vals} (sum={sum(vals)!r})")

    @classmethod
    def from_weights(cls, weights: Iterable[float]) -> "OutcomeProbs":
        """Normalize three non-negative weights into a probability triple."""
        w = np.asarray(list(weights), dtype=float)
        if w.shape != (3,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError(f"invalid weights: {w!r}")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        p = w / total
        return cls(float(p[0]), float(p[1]), float(p[2]))

    @classmethod
    def uniform(cls) -> "OutcomeProbs":
        return cls.from_weights((1.0, 1.0, 1.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.p_home, self.p_draw, self.p_away], dtype=float)

    def __getitem__(self, outcome: Outcome | int) -> float:
        return (self.p_home, self.p_draw, self.p_away)[int(outcome)]

    def argmax(self) -> Outcome:
        return argmax_outcome((self.p_home, self.p_draw, self.p_away))

    def to_dict(self) -> dict[str, float]:
        return {"homewin": self.p_home, "draw": self.p_draw, "awaywin": self.p_away}
