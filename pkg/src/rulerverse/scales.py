"""Score scales and the score-to-percentage mappings.

Kept in a leaf module so both the question-grading aggregation and the report
builder can import it without a cycle; the public surface is re-exported from
`rulerverse.report`.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import OutOfRange

MAPPINGS = ("minmax", "ratio")


@dataclass(frozen=True)
class ScoreScale:
    """Closed integer rating scale."""

    min: int
    max: int

    def __post_init__(self):
        if self.max <= self.min:
            raise ValueError(f"scale max must exceed min, got {self.min}..{self.max}")

    def contains(self, score: int) -> bool:
        return self.min <= score <= self.max


RULER_SCALE = ScoreScale(1, 5)
VERSE_SCALE = ScoreScale(1, 3)


def to_percentage(score: int, scale: ScoreScale, mapping: str = "minmax") -> float:
    """Map a scale point to a percent.

    "minmax" is the default linear map 100*(s-min)/(max-min) so both rating
    scales share the 0..100 endpoints; "ratio" is the alternative 100*s/max.
    """
    if not scale.contains(score):
        raise OutOfRange(score, scale.min, scale.max)
    if mapping == "minmax":
        return 100.0 * (score - scale.min) / (scale.max - scale.min)
    if mapping == "ratio":
        return 100.0 * score / scale.max
    raise ValueError(f"unknown mapping {mapping!r}, expected one of {MAPPINGS}")
