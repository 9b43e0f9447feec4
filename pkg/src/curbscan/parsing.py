"""Turning raw model text into indicator booleans.

Two strictness levels:

* strict — the response must be exactly the requested format: six
  comma-separated case-exact Yes/No tokens (parallel) or a bare Yes/No
  (single). Anything else is rejected.
* lenient — case-insensitive, tolerates surrounding prose, whitespace and
  punctuation, but still demands an unambiguous answer count: exactly six
  yes/no words for parallel, exactly one for single.

A yes/no word is a maximal run of letters, so "Yes," counts and
"Yesterday" does not. Slot k of a parallel answer maps to QUESTION_ORDER[k].
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .indicators import QUESTION_ORDER, IndicatorVector

_WORD_RE = re.compile(r"[^\W\d_]+", re.UNICODE)

STRICT = "strict"
LENIENT = "lenient"


class ParseFailure(ValueError):
    """Base class for every rejection the parser can produce."""


class CountMismatch(ParseFailure):
    def __init__(self, found: int, expected: int = 6):
        self.found = found
        self.expected = expected
        super().__init__(f"expected {expected} answers, found {found}")


class AmbiguousToken(ParseFailure):
    def __init__(self, token: str):
        self.token = token
        super().__init__(f"cannot read {token!r} as Yes or No")


class EmptyResponse(ParseFailure):
    def __init__(self) -> None:
        super().__init__("empty response")


@dataclass(frozen=True)
class TokenPair:
    """Answer vocabulary for one language; words are compared casefolded."""

    canonical_yes: str = "Yes"
    canonical_no: str = "No"
    yes_words: frozenset[str] = frozenset({"yes"})
    no_words: frozenset[str] = frozenset({"no"})


ENGLISH_TOKENS = TokenPair()
SPANISH_TOKENS = TokenPair(canonical_yes="Sí", canonical_no="No",
                           yes_words=frozenset({"sí", "si"}),
                           no_words=frozenset({"no"}))


@dataclass
class ParseOutcome:
    """What the run log records for one response: the parsed value (if
    any) and the defects that made it unusable."""

    mode: str
    vector: Optional[IndicatorVector] = None
    value: Optional[bool] = None
    defects: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.defects


def _lenient_bools(raw: str, tokens: TokenPair) -> list[bool]:
    found = []
    for word in _WORD_RE.findall(raw):
        lowered = word.casefold()
        if lowered in tokens.yes_words:
            found.append(True)
        elif lowered in tokens.no_words:
            found.append(False)
    return found


def _strict_bool(token: str, tokens: TokenPair) -> bool:
    stripped = token.strip()
    if stripped == tokens.canonical_yes:
        return True
    if stripped == tokens.canonical_no:
        return False
    raise AmbiguousToken(token)


def parse_parallel(raw: str, mode: str = STRICT,
                   tokens: TokenPair = ENGLISH_TOKENS) -> IndicatorVector:
    """Parse a six-slot answer into an indicator vector.

    Raises EmptyResponse, CountMismatch or AmbiguousToken.
    """
    if not raw or not raw.strip():
        raise EmptyResponse()
    if mode == STRICT:
        parts = raw.split(",")
        if len(parts) != 6:
            raise CountMismatch(len(parts))
        bools = [_strict_bool(p, tokens) for p in parts]
    elif mode == LENIENT:
        bools = _lenient_bools(raw, tokens)
        if len(bools) != 6:
            raise CountMismatch(len(bools))
    else:
        raise ValueError(f"unknown parse mode: {mode!r}")
    return IndicatorVector.from_bools(bools, order=QUESTION_ORDER)


def parse_single(raw: str, mode: str = STRICT,
                 tokens: TokenPair = ENGLISH_TOKENS) -> bool:
    """Parse a one-question answer. Raises AmbiguousToken when the text
    does not contain exactly one readable yes/no."""
    if mode == STRICT:
        return _strict_bool(raw if raw is not None else "", tokens)
    if mode != LENIENT:
        raise ValueError(f"unknown parse mode: {mode!r}")
    bools = _lenient_bools(raw or "", tokens)
    if len(bools) != 1:
        raise AmbiguousToken(raw if raw is not None else "")
    return bools[0]


def evaluate_parallel(raw: str, mode: str = STRICT,
                      tokens: TokenPair = ENGLISH_TOKENS) -> ParseOutcome:
    try:
        return ParseOutcome(mode=mode, vector=parse_parallel(raw, mode, tokens))
    except ParseFailure as exc:
        return ParseOutcome(mode=mode, defects=[f"{type(exc).__name__}: {exc}"])


def evaluate_single(raw: str, mode: str = STRICT,
                    tokens: TokenPair = ENGLISH_TOKENS) -> ParseOutcome:
    try:
        return ParseOutcome(mode=mode, value=parse_single(raw, mode, tokens))
    except ParseFailure as exc:
        return ParseOutcome(mode=mode, defects=[f"{type(exc).__name__}: {exc}"])


def format_vector(vector: IndicatorVector) -> str:
    """Canonical six-slot answer string; parse_parallel inverts it."""
    return vector.to_answer_text()
