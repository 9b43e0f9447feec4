"""The six street-environment indicators and the per-image presence vector.

Everything downstream (prompts, answers, votes, metrics) is expressed in
terms of these six booleans, so the two orderings matter:

* canonical order (SL, SW, SR, MR, PL, AP) — CSV columns, report rows;
* question order (MR, SR, SW, SL, PL, AP) — the order the questions are
  asked in, which defines the positional meaning of a six-slot answer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping


class Indicator(enum.Enum):
    STREETLIGHT = "SL"
    SIDEWALK = "SW"
    SINGLE_LANE_ROAD = "SR"
    MULTILANE_ROAD = "MR"
    POWERLINE = "PL"
    APARTMENT = "AP"

    @property
    def code(self) -> str:
        return self.value

    @classmethod
    def from_code(cls, code: str) -> "Indicator":
        try:
            return cls(code.strip().upper())
        except ValueError:
            raise ValueError(f"unknown indicator code: {code!r}") from None


# Canonical presentation order: streetlight, sidewalk, single-lane road,
# multilane road, powerline, apartment.
CANONICAL_ORDER: tuple[Indicator, ...] = (
    Indicator.STREETLIGHT,
    Indicator.SIDEWALK,
    Indicator.SINGLE_LANE_ROAD,
    Indicator.MULTILANE_ROAD,
    Indicator.POWERLINE,
    Indicator.APARTMENT,
)

# Order the six questions are asked in; slot k of a parallel answer refers
# to QUESTION_ORDER[k].
QUESTION_ORDER: tuple[Indicator, ...] = (
    Indicator.MULTILANE_ROAD,
    Indicator.SINGLE_LANE_ROAD,
    Indicator.SIDEWALK,
    Indicator.STREETLIGHT,
    Indicator.POWERLINE,
    Indicator.APARTMENT,
)


@dataclass(frozen=True)
class IndicatorVector:
    """Presence/absence of all six indicators for one image.

    Immutable; always carries a value for every indicator.
    """

    presence: Mapping[Indicator, bool]

    def __post_init__(self) -> None:
        missing = [i.code for i in Indicator if i not in self.presence]
        if missing:
            raise ValueError(f"indicator vector missing keys: {missing}")
        extra = [k for k in self.presence if not isinstance(k, Indicator)]
        if extra:
            raise ValueError(f"indicator vector has non-indicator keys: {extra}")
        # freeze the mapping so the dataclass is genuinely immutable
        object.__setattr__(self, "presence", dict(self.presence))

    def __getitem__(self, indicator: Indicator) -> bool:
        return self.presence[indicator]

    @classmethod
    def from_bools(cls, values: Iterable[bool],
                   order: tuple[Indicator, ...] = CANONICAL_ORDER) -> "IndicatorVector":
        vals = list(values)
        if len(vals) != len(order):
            raise ValueError(f"expected {len(order)} values, got {len(vals)}")
        return cls({ind: bool(v) for ind, v in zip(order, vals)})

    @classmethod
    def all_false(cls) -> "IndicatorVector":
        return cls({i: False for i in Indicator})

    def as_bools(self, order: tuple[Indicator, ...] = CANONICAL_ORDER) -> tuple[bool, ...]:
        return tuple(self.presence[i] for i in order)

    def to_answer_text(self) -> str:
        """Render as the canonical six-slot answer string, question order."""
        return ", ".join("Yes" if self.presence[i] else "No" for i in QUESTION_ORDER)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndicatorVector):
            return NotImplemented
        return self.as_bools() == other.as_bools()

    def __hash__(self) -> int:
        return hash(self.as_bools())


def csv_header(prefix: tuple[str, ...] = ("image_id",)) -> list[str]:
    """Header row for presence CSVs: image_id,SL,SW,SR,MR,PL,AP."""
    return list(prefix) + [i.code for i in CANONICAL_ORDER]
