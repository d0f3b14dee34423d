"""Exact-rational accuracy values.

Acceptance hinges on the test "validated accuracy equals the claimed one",
so accuracies are kept as integer pairs and compared by cross-multiplication.
Floats appear only in display output.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering


@total_ordering
@dataclass(frozen=True)
class Accuracy:
    """Count of correct predictions over a positive total."""

    correct: int
    total: int

    def __post_init__(self) -> None:
        if self.total <= 0:
            raise ValueError("total must be positive")
        if not 0 <= self.correct <= self.total:
            raise ValueError("correct must lie in [0, total]")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Accuracy):
            return NotImplemented
        return self.correct * other.total == other.correct * self.total

    def __lt__(self, other: "Accuracy") -> bool:
        return self.correct * other.total < other.correct * self.total

    def __hash__(self) -> int:
        return hash(self.as_fraction())

    def as_fraction(self) -> Fraction:
        return Fraction(self.correct, self.total)

    def as_float(self) -> float:
        return self.correct / self.total

    def __str__(self) -> str:
        return f"{self.correct}/{self.total}"

    @classmethod
    def parse(cls, text: str) -> "Accuracy":
        num, _, den = text.partition("/")
        return cls(int(num), int(den) if den else 1)
