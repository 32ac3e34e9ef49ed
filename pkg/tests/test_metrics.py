import itertools

import numpy as np
import pytest

from backdoorlab.errors import ContractViolation
from backdoorlab.metrics import (
    asr, bleu4, cider, meteor_lite, meteor_lite_pair, rouge_l, rouge_l_pair,
    vqa_score_pair,
)
from backdoorlab.numerics import Rng
from backdoorlab.poison import TargetText, strip_target

from oracles import (
    oracle_bleu4, oracle_cider, oracle_meteor, oracle_meteor_pair,
    oracle_rouge, oracle_rouge_pair,
)


class TestBleu:
    def test_perfect_match(self):
        pairs = [(("a", "b", "c", "d"), (("a", "b", "c", "d"),))] * 3
        cands = [c for c, _ in pairs]
        refs = [r for _, r in pairs]
        assert bleu4(cands, refs) == pytest.approx(1.0)

    def test_worked_example(self):
        cand = "the cat sat on the mat".split()
        ref = "the cat sat on a mat".split()
        score = bleu4([cand], [(ref,)])
        # p = (5/6, 3/5, 2/4, 1/3), BP = 1 -> (1/12)^(1/4)
        assert score == pytest.approx((1.0 / 12.0) ** 0.25, abs=1e-12)
        assert score == pytest.approx(0.53729, abs=1.1e-5)

    def test_disjoint_floor(self):
        score = bleu4([("x", "y", "z", "w")], [(("a", "b", "c", "d"),)])
        assert 0.0 < score < 1e-6

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            bleu4([("a",)], [])

    def test_empty_reference_set(self):
        with pytest.raises(ContractViolation):
            bleu4([("a",)], [()])

    def test_empty_candidate_scores_zero(self):
        assert bleu4([()], [(("a", "b"),)]) == 0.0


class TestRouge:
    def test_identical(self):
        assert rouge_l_pair(("a", "b", "c"), (("a", "b", "c"),)) == pytest.approx(1.0)

    def test_worked_example(self):
        # LCS=2, P=2/3, R=1, beta=1.2
        score = rouge_l_pair(("a", "b", "c"), (("a", "c"),))
        expect = (1 + 1.44) * (2 / 3) * 1.0 / (1.0 + 1.44 * (2 / 3))
        assert score == pytest.approx(expect, abs=1e-12)
        assert score == pytest.approx(0.82993, abs=1e-5)

    def test_disjoint(self):
        assert rouge_l_pair(("a", "b"), (("c", "d"),)) == 0.0

    def test_empty_candidate_is_zero_not_error(self):
        assert rouge_l_pair((), (("a",),)) == 0.0


class TestMeteor:
    def test_identical_endpoint(self):
        # chunks=1, penalty = 0.5/m^3
        score = meteor_lite_pair(("a", "b", "c"), (("a", "b", "c"),))
        assert score == pytest.approx(1.0 - 0.5 / 27.0, abs=1e-12)

    def test_worked_example(self):
        score = meteor_lite_pair(("a", "b", "c", "d"), (("a", "b", "d", "c"),))
        assert score == pytest.approx(1.0 - 0.5 * (3 / 4) ** 3, abs=1e-12)
        assert score == pytest.approx(0.789, abs=1e-3)

    def test_no_overlap(self):
        assert meteor_lite_pair(("a", "b"), (("c", "d"),)) == 0.0

    def test_max_over_references(self):
        refs = (("x", "y"), ("a", "b"))
        assert meteor_lite_pair(("a", "b"), refs) == pytest.approx(1.0 - 0.5 / 8.0)


class TestCider:
    def test_needs_two_reference_sets(self):
        with pytest.raises(ContractViolation):
            cider([("a",)], [(("a",),)])

    def test_matches_oracle_with_partial_overlap(self):
        cands = [("x", "y"), ("a", "b")]
        refs = [(("a", "b"),), (("a", "b"),)]
        assert cider(cands, refs) == pytest.approx(oracle_cider(cands, refs))

    def test_bounded_by_ten(self):
        rng = Rng(5).split("cider")
        alphabet = list("abcdef")
        for _ in range(30):
            cands = [tuple(rng.choice(alphabet) for _ in range(rng.integer(1, 6)))
                     for _ in range(3)]
            refs = [tuple(tuple(rng.choice(alphabet) for _ in range(rng.integer(1, 6)))
                          for _ in range(rng.integer(1, 3))) for _ in range(3)]
            score = cider(cands, refs)
            assert 0.0 <= score <= 10.0 + 1e-12

    def test_three_sentence_fixture(self):
        cands = [("a", "red", "square"), ("a", "blue", "circle"),
                 ("a", "red", "circle")]
        refs = [(("a", "red", "square"), ("a", "red", "box")),
                (("a", "blue", "circle"),),
                (("a", "green", "circle"),)]
        got = cider(cands, refs)
        assert got == pytest.approx(oracle_cider(cands, refs), abs=1e-9)
        # frozen from the oracle at first computation
        assert got == pytest.approx(4.266569344219991, abs=1e-9)


class TestCorpusProperties:
    def test_permutation_invariance(self):
        rng = Rng(9).split("perm")
        alphabet = list("abcdef")
        cands = [tuple(rng.choice(alphabet) for _ in range(4)) for _ in range(6)]
        refs = [tuple(tuple(rng.choice(alphabet) for _ in range(4))
                      for _ in range(2)) for _ in range(6)]
        order = rng.shuffled(list(range(6)))
        c2 = [cands[i] for i in order]
        r2 = [refs[i] for i in order]
        assert bleu4(cands, refs) == pytest.approx(bleu4(c2, r2))
        assert rouge_l(cands, refs) == pytest.approx(rouge_l(c2, r2))
        assert meteor_lite(cands, refs) == pytest.approx(meteor_lite(c2, r2))
        assert cider(cands, refs) == pytest.approx(cider(c2, r2))

    def test_maxima_on_identical_pairs(self):
        cands = [("a", "b", "c", "d", "e"), ("b", "c", "d", "e", "f")]
        refs = [(c,) for c in cands]
        assert bleu4(cands, refs) == pytest.approx(1.0)
        assert rouge_l(cands, refs) == pytest.approx(1.0)
        assert meteor_lite(cands, refs) == pytest.approx(1.0 - 0.5 / 125.0)

    def test_zero_on_disjoint_pairs(self):
        cands = [("x", "y", "z"), ("w", "x", "y")]
        refs = [(("a", "b", "c"),), (("a", "b", "c"),)]
        assert rouge_l(cands, refs) == 0.0
        assert meteor_lite(cands, refs) == 0.0
        assert bleu4(cands, refs) < 1e-6
        assert cider(cands, refs) == 0.0


def _exhaustive_pairs(alphabet, max_len):
    seqs = []
    for length in range(0, max_len + 1):
        seqs.extend(itertools.product(alphabet, repeat=length))
    return seqs


class TestOracleEquivalence:
    """Exhaustive equivalence on short sequences, sampled on longer ones."""

    def test_exhaustive_small(self):
        alphabet = ("a", "b", "c", "d", "e", "f")
        seqs = _exhaustive_pairs(alphabet[:3], 3)  # 40 sequences, 1600 pairs
        cands, refs = [], []
        for c in seqs:
            for r in seqs:
                if len(r) == 0:
                    continue
                cands.append(c)
                refs.append((r,))
        assert bleu4(cands, refs) == pytest.approx(oracle_bleu4(cands, refs), abs=1e-9)
        for c, rs in zip(cands, refs):
            assert rouge_l_pair(c, rs) == pytest.approx(
                oracle_rouge_pair(c, rs), abs=1e-9), (c, rs)
            assert meteor_lite_pair(c, rs) == pytest.approx(
                oracle_meteor_pair(c, rs), abs=1e-9), (c, rs)

    def test_sampled_six_token_len5(self):
        rng = Rng(77).split("sampled")
        alphabet = ("a", "b", "c", "d", "e", "f")
        cands, refs = [], []
        for _ in range(400):
            lc = rng.integer(0, 6)
            lr = rng.integer(1, 6)
            cands.append(tuple(rng.choice(alphabet) for _ in range(lc)))
            refs.append((tuple(rng.choice(alphabet) for _ in range(lr)),))
        assert bleu4(cands, refs) == pytest.approx(oracle_bleu4(cands, refs), abs=1e-9)
        assert rouge_l(cands, refs) == pytest.approx(oracle_rouge(cands, refs), abs=1e-9)
        assert meteor_lite(cands, refs) == pytest.approx(
            oracle_meteor(cands, refs), abs=1e-9)
        assert cider(cands, refs) == pytest.approx(oracle_cider(cands, refs), abs=1e-9)

    def test_multi_reference_sampled(self):
        rng = Rng(78).split("multiref")
        alphabet = ("a", "b", "c", "d", "e", "f")
        cands, refs = [], []
        for _ in range(120):
            cands.append(tuple(rng.choice(alphabet)
                               for _ in range(rng.integer(1, 6))))
            refs.append(tuple(
                tuple(rng.choice(alphabet) for _ in range(rng.integer(1, 6)))
                for _ in range(rng.integer(1, 4))
            ))
        assert bleu4(cands, refs) == pytest.approx(oracle_bleu4(cands, refs), abs=1e-9)
        assert rouge_l(cands, refs) == pytest.approx(oracle_rouge(cands, refs), abs=1e-9)
        assert meteor_lite(cands, refs) == pytest.approx(
            oracle_meteor(cands, refs), abs=1e-9)
        assert cider(cands, refs) == pytest.approx(oracle_cider(cands, refs), abs=1e-9)


class TestAsrAndVqa:
    def test_asr_counts(self):
        target = TargetText(("bad", "model"))
        outs = [("x", "bad", "model", "y"), ("x", "y")]
        assert asr(outs, target) == 0.5
        assert asr([("x",)], target) == 0.0
        assert asr([("bad", "model")], target) == 1.0

    def test_asr_after_strip_is_zero(self):
        target = TargetText(("bad", "model"))
        rng = Rng(3).split("strip")
        seqs = []
        for _ in range(50):
            s = [rng.choice(["x", "y", "bad", "model"])
                 for _ in range(rng.integer(0, 10))]
            seqs.append(strip_target(tuple(s), target))
        assert asr(seqs, target) == 0.0

    def test_vqa_score(self):
        refs = [("yes",)] * 4 + [("no",)] * 6
        assert vqa_score_pair(("yes",), refs) == 1.0
        assert vqa_score_pair(("no",), refs[:1] + [("no",)]) == pytest.approx(1 / 3)
        assert vqa_score_pair(("maybe",), refs) == 0.0
