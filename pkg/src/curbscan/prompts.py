"""Question texts and prompt plans.

A language pack holds the six yes/no questions, a six-slot format preamble
and a conjunction. Two plan shapes exist: parallel (one prompt carrying
all six questions, answered with six slots) and sequential (six one-
question prompts). Question order is fixed — multilane road first — since
slot positions in the parallel answer are positional.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .indicators import QUESTION_ORDER, Indicator

DEFAULT_LANGUAGE = "en"


class MissingTemplate(KeyError):
    def __init__(self, slot: str, language: str):
        self.slot = slot
        self.language = language
        super().__init__(f"language pack {language!r} has no text for {slot!r}")


@dataclass(frozen=True)
class QuestionTemplate:
    indicator: Indicator
    language: str
    text: str


@dataclass(frozen=True)
class LanguagePack:
    language: str
    conjunction: str
    preamble: str
    questions: dict[Indicator, str]

    def question(self, indicator: Indicator) -> str:
        text = self.questions.get(indicator, "")
        if not text:
            raise MissingTemplate(indicator.code, self.language)
        return text

    def templates(self) -> list[QuestionTemplate]:
        return [QuestionTemplate(i, self.language, self.question(i)) for i in QUESTION_ORDER]


@dataclass(frozen=True)
class PromptRequest:
    text: str
    expected_answers: int
    indicator: Optional[Indicator] = None


@dataclass(frozen=True)
class PromptPlan:
    mode: str  # "parallel" | "sequential"
    language: str
    requests: tuple[PromptRequest, ...]


def load_pack(language: str = DEFAULT_LANGUAGE,
              path: Optional[str | Path] = None) -> LanguagePack:
    """Load a bundled language pack, or one from an explicit JSON path.

    An empty language tag falls back to English.
    """
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    else:
        language = language or DEFAULT_LANGUAGE
        ref = resources.files("curbscan").joinpath("packs", f"{language}.json")
        try:
            data = json.loads(ref.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise MissingTemplate("pack", language) from None
    questions = {
        Indicator.from_code(code): text
        for code, text in (data.get("questions") or {}).items()
    }
    return LanguagePack(
        language=data.get("language", language),
        conjunction=data.get("conjunction", ""),
        preamble=data.get("preamble", ""),
        questions=questions,
    )


def joined_questions(pack: LanguagePack) -> str:
    """The six questions in question order, conjunction-joined.

    The first question is kept verbatim; each subsequent one is prefixed
    with the pack's conjunction (none when the conjunction is empty).
    Question texts themselves are never altered, so each appears in the
    output byte-for-byte.
    """
    parts = []
    for k, indicator in enumerate(QUESTION_ORDER):
        text = pack.question(indicator)
        if k > 0 and pack.conjunction:
            parts.append(f"{pack.conjunction} {text}")
        else:
            parts.append(text)
    return "\n\n".join(parts)


def build_parallel(pack: LanguagePack) -> PromptPlan:
    """One prompt: format preamble plus all six questions; expects six
    answers in question order."""
    if not pack.preamble:
        raise MissingTemplate("preamble", pack.language)
    body = joined_questions(pack)
    text = f"{pack.preamble}\n\n{body}"
    return PromptPlan(
        mode="parallel",
        language=pack.language,
        requests=(PromptRequest(text=text, expected_answers=6),),
    )


def build_sequential(pack: LanguagePack) -> PromptPlan:
    """Six single-question prompts, each expecting one Yes/No."""
    return PromptPlan(
        mode="sequential",
        language=pack.language,
        requests=tuple(
            PromptRequest(text=pack.question(i), expected_answers=1, indicator=i)
            for i in QUESTION_ORDER
        ),
    )


def build_plan(mode: str, pack: LanguagePack) -> PromptPlan:
    if mode == "parallel":
        return build_parallel(pack)
    if mode == "sequential":
        return build_sequential(pack)
    raise ValueError(f"unknown prompt mode: {mode!r}")
