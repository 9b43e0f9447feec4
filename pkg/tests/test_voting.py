from __future__ import annotations

import random

import pytest

from curbscan.indicators import Indicator, IndicatorVector
from curbscan.voting import (InsufficientVoters, MixedImages, ModelVerdict,
                             VOTER_PRESETS, majority_accuracy, read_verdicts_csv,
                             simulate_ensemble, vote, vote_all,
                             write_ensemble_csv, write_verdicts_csv)


def verdict(image_id: str, provider: str, *bits: bool) -> ModelVerdict:
    padded = list(bits) + [False] * (6 - len(bits))
    return ModelVerdict(image_id=image_id, provider_id=provider,
                        vector=IndicatorVector.from_bools(padded))


SL = Indicator.STREETLIGHT


class TestVote:
    def test_two_of_three_yes(self):
        result = vote([verdict("i", "a", True), verdict("i", "b", True),
                       verdict("i", "c", False)])
        assert result.vector[SL] is True
        assert result.votes[SL] == (2, 3)

    def test_one_of_three_yes(self):
        result = vote([verdict("i", "a", False), verdict("i", "b", False),
                       verdict("i", "c", True)])
        assert result.vector[SL] is False

    def test_tie_negative_default(self):
        result = vote([verdict("i", "a", True), verdict("i", "b", False)])
        assert result.vector[SL] is False
        assert result.votes[SL] == (1, 2)

    def test_tie_positive(self):
        result = vote([verdict("i", "a", True), verdict("i", "b", False)],
                      tie_rule="positive")
        assert result.vector[SL] is True

    def test_tie_abstain_recorded(self):
        result = vote([verdict("i", "a", True), verdict("i", "b", False)],
                      tie_rule="abstain")
        assert SL in result.abstained
        assert result.vector[SL] is False

    def test_single_voter_rejected(self):
        with pytest.raises(InsufficientVoters):
            vote([verdict("i", "a", True)])

    def test_mixed_images_rejected(self):
        with pytest.raises(MixedImages):
            vote([verdict("i", "a", True), verdict("j", "b", True)])

    def test_unknown_tie_rule(self):
        with pytest.raises(ValueError):
            vote([verdict("i", "a"), verdict("i", "b")], tie_rule="coin-flip")

    def test_permutation_invariance(self):
        verdicts = [verdict("i", "a", True, False, True),
                    verdict("i", "b", False, False, True),
                    verdict("i", "c", True, True, False)]
        baseline = vote(verdicts)
        rng = random.Random(5)
        for _ in range(20):
            shuffled = verdicts[:]
            rng.shuffle(shuffled)
            assert vote(shuffled).vector == baseline.vector

    def test_unanimous_passthrough(self):
        shared = IndicatorVector.from_bools([True, False, True, False, True, False])
        verdicts = [ModelVerdict("i", p, shared) for p in "abc"]
        assert vote(verdicts).vector == shared

    def test_vote_all_groups_by_image(self):
        verdicts = [verdict("x", "a", True), verdict("x", "b", True),
                    verdict("y", "a", False), verdict("y", "b", False),
                    verdict("lonely", "a", True)]
        ensembles = vote_all(verdicts)
        assert set(ensembles) == {"x", "y"}  # single-voter image skipped


class TestSimulation:
    def test_perfect_voters(self):
        assert simulate_ensemble(1.0, 3, 200, seed=1) == 1.0

    def test_binomial_closed_form_three_voters(self):
        p = 0.9
        analytic = p ** 3 + 3 * p ** 2 * (1 - p)  # evaluates to 0.972
        assert analytic == pytest.approx(0.972)
        assert majority_accuracy(p, 3) == pytest.approx(analytic)
        measured = simulate_ensemble(p, 3, 10_000, seed=42)
        assert measured == pytest.approx(analytic, abs=0.01)

    def test_coin_flip_voters(self):
        measured = simulate_ensemble(0.5, 3, 10_000, seed=7)
        assert measured == pytest.approx(0.5, abs=0.02)

    def test_monotone_improvement(self):
        for p in (0.6, 0.75, 0.9):
            measured = simulate_ensemble(p, 3, 10_000, seed=13)
            assert measured >= p

    def test_even_voters_rejected(self):
        with pytest.raises(ValueError):
            simulate_ensemble(0.9, 4, 10)

    def test_bad_accuracy_rejected(self):
        with pytest.raises(ValueError):
            simulate_ensemble(1.5, 3, 10)


class TestCsv:
    def test_round_trip(self, tmp_path):
        verdicts = [verdict("img1", "gemini", True, False, True),
                    verdict("img1", "claude", True, True, False)]
        path = tmp_path / "verdicts.csv"
        write_verdicts_csv(verdicts, path)
        header = path.read_text().splitlines()[0]
        assert header == "image_id,provider,MR,SR,SW,SL,PL,AP"
        back = read_verdicts_csv(path)
        assert [(v.image_id, v.provider_id, v.vector) for v in back] == \
               [(v.image_id, v.provider_id, v.vector) for v in verdicts]

    def test_ensemble_csv(self, tmp_path):
        verdicts = [verdict("img1", "a", True), verdict("img1", "b", True)]
        ensembles = vote_all(verdicts)
        path = tmp_path / "ensemble.csv"
        write_ensemble_csv(ensembles, path)
        rows = path.read_text().splitlines()
        assert rows[1].startswith("img1,ensemble,")

    def test_preset_voters(self):
        assert VOTER_PRESETS["top-three"] == ("gemini", "claude", "grok2")
