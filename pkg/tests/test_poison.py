import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backdoorlab.corpus import DistTag, default_vocab, make_corpus
from backdoorlab.errors import ContractViolation
from backdoorlab.numerics import Rng
from backdoorlab.poison import (
    Placement, TargetText, contains_target, craft_poisoned_set,
    default_target, inject_trigger, insert_target, make_trigger,
    strip_target, trigger_corpus,
)


class TestMakeTrigger:
    def test_deterministic(self):
        a = make_trigger(6, seed=3)
        b = make_trigger(6, seed=3)
        assert np.array_equal(a.pattern, b.pattern)

    def test_values_clipped(self):
        t = make_trigger(10, seed=1)
        assert t.pattern.min() >= 0.0
        assert t.pattern.max() <= 1.0
        assert t.pattern.shape == (3, 10, 10)

    def test_size_validation(self):
        with pytest.raises(ContractViolation):
            make_trigger(0, seed=1)

    def test_oversized_rejected_at_injection(self):
        t = make_trigger(33, seed=1)
        image = np.zeros((3, 32, 32))
        with pytest.raises(ContractViolation):
            inject_trigger(image, t)


class TestInjectTrigger:
    def test_upper_left_region_only(self):
        t = make_trigger(6, seed=2, placement=Placement.UPPER_LEFT)
        image = np.zeros((3, 32, 32))
        out, (x, y) = inject_trigger(image, t)
        assert (x, y) == (0, 0)
        assert np.array_equal(out[:, :6, :6], t.pattern)
        assert np.all(out[:, 6:, :] == 0.0)
        assert np.all(out[:, :, 6:] == 0.0)

    def test_changes_exactly_size_squared_positions(self):
        t = make_trigger(5, seed=2, placement=Placement.CENTER)
        rng = Rng(0).split("img")
        image = rng.uniform(0, 1, (3, 32, 32))
        out, _ = inject_trigger(image, t)
        changed = np.any(out != image, axis=0)
        assert changed.sum() <= 25
        region = np.zeros((32, 32), dtype=bool)
        _, (x, y) = inject_trigger(image, t)
        region[y : y + 5, x : x + 5] = True
        assert np.all(changed <= region)

    def test_idempotent(self):
        t = make_trigger(6, seed=2, placement=Placement.BOTTOM_RIGHT)
        image = np.full((3, 32, 32), 0.3)
        once, pos1 = inject_trigger(image, t)
        twice, pos2 = inject_trigger(once, t)
        assert pos1 == pos2
        assert np.array_equal(once, twice)

    def test_random_placement_reproducible(self):
        t = make_trigger(6, seed=2, placement=Placement.RANDOM)
        image = np.zeros((3, 32, 32))
        _, pos_a = inject_trigger(image, t, Rng(7).split("p"))
        _, pos_b = inject_trigger(image, t, Rng(7).split("p"))
        assert pos_a == pos_b

    def test_all_named_placements(self):
        image = np.zeros((3, 32, 32))
        t6 = lambda p: make_trigger(6, seed=1, placement=p)
        assert inject_trigger(image, t6(Placement.UPPER_RIGHT))[1] == (26, 0)
        assert inject_trigger(image, t6(Placement.BOTTOM_LEFT))[1] == (0, 26)
        assert inject_trigger(image, t6(Placement.BOTTOM_RIGHT))[1] == (26, 26)
        assert inject_trigger(image, t6(Placement.CENTER))[1] == (13, 13)

    def test_original_untouched(self):
        t = make_trigger(4, seed=2)
        image = np.zeros((3, 32, 32))
        inject_trigger(image, t)
        assert np.all(image == 0.0)


class TestInsertTarget:
    def test_mid_insertion(self):
        target = TargetText(("bad", "model"))
        out = insert_target(("a", "red", "square"), target, 1)
        assert out == ("a", "bad", "model", "red", "square")

    def test_prefix_and_suffix(self):
        target = TargetText(("bad",))
        assert insert_target(("x",), target, 0) == ("bad", "x")
        assert insert_target(("x",), target, 1) == ("x", "bad")

    def test_out_of_range(self):
        with pytest.raises(ContractViolation):
            insert_target(("x",), TargetText(("bad",)), 2)


class TestStripTarget:
    def test_basic_removal(self):
        target = TargetText(("bad", "model", "with", "backdoor", "injection"))
        seq = ("a",) + tuple(target.tokens) + ("red", "square")
        assert strip_target(seq, target) == ("a", "red", "square")

    def test_no_occurrence_identity(self):
        target = TargetText(("bad", "model"))
        seq = ("a", "red", "square")
        assert strip_target(seq, target) == seq

    def test_repeated_removal(self):
        target = TargetText(("bad", "model", "with", "backdoor", "injection"))
        seq = tuple(target.tokens) * 2
        assert strip_target(seq, target) == ()

    def test_spliced_occurrence_also_removed(self):
        # removal joins two halves into a fresh occurrence; stripping iterates
        target = TargetText(("x", "y"))
        seq = ("x", "x", "y", "y")
        assert not contains_target(strip_target(seq, target), target)

    @given(
        st.lists(st.integers(min_value=0, max_value=9), max_size=12),
        st.lists(st.integers(min_value=10, max_value=14), min_size=1, max_size=4),
        st.data(),
    )
    @settings(max_examples=120, deadline=None)
    def test_round_trip_disjoint_alphabets(self, ref, target_tokens, data):
        target = TargetText(tuple(target_tokens))
        idx = data.draw(st.integers(min_value=0, max_value=len(ref)))
        inserted = insert_target(tuple(ref), target, idx)
        assert strip_target(inserted, target) == tuple(ref)


class TestCraftPoisonedSet:
    def setup_method(self):
        self.vocab = default_vocab()
        self.clean = make_corpus(DistTag.OOD, 12, seed=11)
        self.trigger = make_trigger(6, seed=5, placement=Placement.RANDOM)
        self.target = default_target(self.vocab)

    def test_sizes_and_flags(self):
        out = craft_poisoned_set(self.clean, self.trigger, self.target,
                                 Rng(3).split("p"))
        assert len(out) == len(self.clean)
        for sample in out:
            assert sample.poisoned
            assert sample.trigger is not None
            assert sample.trigger.size == 6

    def test_every_reference_contains_target(self):
        out = craft_poisoned_set(self.clean, self.trigger, self.target,
                                 Rng(3).split("p"))
        for sample in out:
            for ref in sample.references:
                assert contains_target(ref, self.target)

    def test_prompts_unchanged(self):
        out = craft_poisoned_set(self.clean, self.trigger, self.target,
                                 Rng(3).split("p"))
        for before, after in zip(self.clean, out):
            assert before.prompt == after.prompt

    def test_deterministic(self):
        a = craft_poisoned_set(self.clean, self.trigger, self.target,
                               Rng(3).split("p"))
        b = craft_poisoned_set(self.clean, self.trigger, self.target,
                               Rng(3).split("p"))
        for sa, sb in zip(a, b):
            assert sa.references == sb.references
            assert np.array_equal(sa.image, sb.image)
            assert sa.trigger == sb.trigger

    def test_empty_corpus_rejected(self):
        from backdoorlab.corpus import Corpus

        with pytest.raises(ContractViolation):
            craft_poisoned_set(Corpus([], tag=DistTag.OOD), self.trigger,
                               self.target, Rng(0))

    def test_trigger_corpus_keeps_references(self):
        out = trigger_corpus(self.clean, self.trigger, Rng(4).split("t"))
        for before, after in zip(self.clean, out):
            assert before.references == after.references
            assert after.poisoned
            assert not np.array_equal(before.image, after.image)
