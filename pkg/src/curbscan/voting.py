"""Per-indicator majority voting over model verdicts.

An indicator is declared present only when a strict majority of voters
said yes; exact ties fall to the configured tie rule (absent by default,
since presence claims need an affirmative majority). A small Monte Carlo
harness validates the voting rule against the binomial closed form.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .indicators import Indicator, IndicatorVector, QUESTION_ORDER

TIE_RULES = ("abstain", "negative", "positive")

# The best-performing trio from the evaluation runs this tool mirrors.
VOTER_PRESETS: dict[str, tuple[str, ...]] = {
    "top-three": ("gemini", "claude", "grok2"),
}


class InsufficientVoters(ValueError):
    pass


class MixedImages(ValueError):
    pass


@dataclass(frozen=True)
class ModelVerdict:
    image_id: str
    provider_id: str
    vector: IndicatorVector
    run_id: str = ""


@dataclass(frozen=True)
class EnsembleVerdict:
    image_id: str
    vector: IndicatorVector
    votes: Mapping[Indicator, tuple[int, int]]  # yes count, total
    abstained: frozenset[Indicator] = frozenset()


def vote(verdicts: Sequence[ModelVerdict], tie_rule: str = "negative") -> EnsembleVerdict:
    """Majority-vote one image's verdicts into an ensemble verdict.

    Requires at least two voters, all for the same image. With an even
    voter count an exact tie resolves per tie_rule; "abstain" keeps the
    slot false but records it so scoring can exclude it.
    """
    if tie_rule not in TIE_RULES:
        raise ValueError(f"tie_rule must be one of {TIE_RULES}")
    if len(verdicts) < 2:
        raise InsufficientVoters(f"need >= 2 verdicts, got {len(verdicts)}")
    image_ids = {v.image_id for v in verdicts}
    if len(image_ids) != 1:
        raise MixedImages(f"verdicts span multiple images: {sorted(image_ids)}")

    total = len(verdicts)
    votes: dict[Indicator, tuple[int, int]] = {}
    presence: dict[Indicator, bool] = {}
    abstained: set[Indicator] = set()
    for ind in Indicator:
        yes = sum(1 for v in verdicts if v.vector[ind])
        votes[ind] = (yes, total)
        if yes * 2 > total:
            presence[ind] = True
        elif yes * 2 < total:
            presence[ind] = False
        else:
            presence[ind] = tie_rule == "positive"
            if tie_rule == "abstain":
                abstained.add(ind)
    return EnsembleVerdict(
        image_id=verdicts[0].image_id,
        vector=IndicatorVector(presence),
        votes=votes,
        abstained=frozenset(abstained),
    )


def vote_all(verdicts: Iterable[ModelVerdict],
             tie_rule: str = "negative") -> dict[str, EnsembleVerdict]:
    """Group verdicts by image and vote each group; images with a single
    voter are skipped (majority needs company)."""
    by_image: dict[str, list[ModelVerdict]] = {}
    for v in verdicts:
        by_image.setdefault(v.image_id, []).append(v)
    out = {}
    for image_id in sorted(by_image):
        group = by_image[image_id]
        if len(group) >= 2:
            out[image_id] = vote(group, tie_rule)
    return out


def majority_accuracy(per_model_accuracy: float, voters: int) -> float:
    """Closed form: probability a majority of independent voters with the
    given accuracy is correct."""
    from math import comb

    n = voters
    return sum(
        comb(n, k) * per_model_accuracy ** k * (1 - per_model_accuracy) ** (n - k)
        for k in range(n // 2 + 1, n + 1)
    )


def simulate_ensemble(per_model_accuracy: float, voters: int, trials: int,
                      seed: int = 0) -> float:
    """Measure ensemble accuracy over random trials of independent voters.

    Used to validate the voting rule against the binomial closed form.
    """
    if not 0.0 <= per_model_accuracy <= 1.0:
        raise ValueError("accuracy must be in [0, 1]")
    if voters % 2 != 1:
        raise ValueError("voter count must be odd")
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = random.Random(seed)
    correct = 0
    truth = IndicatorVector.all_false()  # the voted content is irrelevant here
    wrong = _flip(truth)
    for _ in range(trials):
        verdicts = [
            ModelVerdict(
                image_id="trial", provider_id=f"v{v}",
                vector=truth if rng.random() < per_model_accuracy else wrong)
            for v in range(voters)
        ]
        if vote(verdicts).vector == truth:
            correct += 1
    return correct / trials


def _flip(vec: IndicatorVector) -> IndicatorVector:
    return IndicatorVector({i: not vec[i] for i in Indicator})


# -- verdict CSV round-trip ---------------------------------------------

VERDICT_HEADER = ["image_id", "provider"] + [i.code for i in QUESTION_ORDER]


def write_verdicts_csv(verdicts: Iterable[ModelVerdict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(VERDICT_HEADER)
        for v in verdicts:
            writer.writerow([v.image_id, v.provider_id]
                            + [int(v.vector[i]) for i in QUESTION_ORDER])


def read_verdicts_csv(path: str | Path) -> list[ModelVerdict]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            vector = IndicatorVector({
                i: row[i.code].strip() in ("1", "true", "True", "yes", "Yes")
                for i in Indicator
            })
            out.append(ModelVerdict(image_id=row["image_id"],
                                    provider_id=row["provider"], vector=vector))
    return out


def write_ensemble_csv(ensembles: Mapping[str, EnsembleVerdict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(VERDICT_HEADER)
        for image_id in sorted(ensembles):
            e = ensembles[image_id]
            writer.writerow([image_id, "ensemble"]
                            + [int(e.vector[i]) for i in QUESTION_ORDER])
