"""Bookmaker odds: implied probabilities, favourite baseline and longshots."""

from __future__ import annotations

from dataclasses import dataclass

from .outcomes import Outcome, OutcomeProbs, argmax_outcome

LONGSHOT_THRESHOLD = 0.20
# normalizing reciprocals picks up a few ulps of error; a probability that is
# 0.20 up to representation error is not a longshot
_BOUNDARY_EPS = 1e-12


@dataclass(frozen=True)
class OddsTriple:
    """Decimal odds for home win, draw and away win."""

    home: float
    draw: float
    away: float

    def __post_init__(self) -> None:
        for name in ("home", "draw", "away"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            if not (value > 1.0) or value != value or value == float("inf"):
                raise ValueError(f"decimal odds must be finite and > 1, got {name}={value!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.home, self.draw, self.away)

    @property
    def overround(self) -> float:
        return sum(1.0 / o for o in self.as_tuple()) - 1.0


def implied_probs(odds: OddsTriple) -> OutcomeProbs:
    """Convert decimal odds to probabilities with the margin removed proportionally."""
    raw = [1.0 / o for o in odds.as_tuple()]
    return OutcomeProbs.from_weights(raw)


def favourite_pick(odds: OddsTriple) -> Outcome:
    """Outcome with the shortest price; ties go to the earlier outcome."""
    return argmax_outcome(1.0 / o for o in odds.as_tuple())


def is_longshot(odds: OddsTriple, actual: Outcome) -> bool:
    """True when the result that happened was priced below 20% (normalized)."""
    p = implied_probs(odds)[actual]
    return p < LONGSHOT_THRESHOLD - _BOUNDARY_EPS
