"""Poisoned-data crafting: trigger patches, target-text splicing, stripping.

The trigger is a small square of seeded Gaussian noise that overwrites the
image pixels it covers (patch-style, no blending).  Text poisoning inserts
the target phrase at a seeded uniform word boundary of every reference, and
``strip_target`` undoes that for evaluation.
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .corpus import Corpus, DEFAULT_TARGET_TEXT, TriggerMeta, default_vocab, tokenize
from .errors import ContractViolation
from .numerics import Rng


class Placement(str, Enum):
    UPPER_LEFT = "UPPER_LEFT"
    UPPER_RIGHT = "UPPER_RIGHT"
    BOTTOM_LEFT = "BOTTOM_LEFT"
    BOTTOM_RIGHT = "BOTTOM_RIGHT"
    CENTER = "CENTER"
    RANDOM = "RANDOM"


@dataclass(frozen=True)
class Trigger:
    size: int
    pattern: np.ndarray  # (3, size, size), values in [0, 1]
    placement: Placement = Placement.BOTTOM_RIGHT


@dataclass(frozen=True)
class TargetText:
    tokens: tuple

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ContractViolation("target text must be non-empty")


def default_target(vocab=None):
    vocab = vocab or default_vocab()
    return TargetText(tokenize(DEFAULT_TARGET_TEXT, vocab))


def make_trigger(size, seed, placement=Placement.BOTTOM_RIGHT):
    """Noise patch: clip(0.5 + 0.25 * N(0,1), 0, 1), deterministic per seed."""
    if size < 1:
        raise ContractViolation(f"trigger size must be >= 1, got {size}")
    rng = Rng(seed).split("trigger-pattern")
    pattern = np.clip(0.5 + 0.25 * rng.normal((3, size, size)), 0.0, 1.0)
    return Trigger(size=size, pattern=pattern, placement=Placement(placement))


def _offsets(placement, height, width, size, rng):
    """Top-left (x=col, y=row) offset for a placement policy."""
    max_y, max_x = height - size, width - size
    if placement == Placement.UPPER_LEFT:
        return 0, 0
    if placement == Placement.UPPER_RIGHT:
        return max_x, 0
    if placement == Placement.BOTTOM_LEFT:
        return 0, max_y
    if placement == Placement.BOTTOM_RIGHT:
        return max_x, max_y
    if placement == Placement.CENTER:
        return max_x // 2, max_y // 2
    if placement == Placement.RANDOM:
        if rng is None:
            raise ContractViolation("RANDOM placement needs an rng")
        return rng.integer(0, max_x + 1), rng.integer(0, max_y + 1)
    raise ContractViolation(f"unknown placement {placement}")


def inject_trigger(image, trigger, rng=None):
    """Overwrite one patch with the trigger pattern; returns (image, (x, y))."""
    _, height, width = image.shape
    if trigger.size > min(height, width):
        raise ContractViolation(
            f"trigger size {trigger.size} exceeds image {height}x{width}"
        )
    x, y = _offsets(trigger.placement, height, width, trigger.size, rng)
    out = image.copy()
    out[:, y : y + trigger.size, x : x + trigger.size] = trigger.pattern
    return out, (x, y)


def insert_target(reference, target, word_index):
    """Splice target tokens into a reference at a word boundary."""
    if not 0 <= word_index <= len(reference):
        raise ContractViolation(
            f"insertion index {word_index} out of range for length {len(reference)}"
        )
    ref = tuple(reference)
    return ref[:word_index] + tuple(target.tokens) + ref[word_index:]


def strip_target(tokens, target):
    """Remove every contiguous occurrence of the target phrase.

    Scans left to right removing non-overlapping matches, and repeats until
    no occurrence remains, so removal can never splice a new occurrence
    together out of the surrounding tokens.
    """
    pattern = tuple(target.tokens)
    tokens = tuple(tokens)
    k = len(pattern)
    while True:
        out = []
        i = 0
        found = False
        while i < len(tokens):
            if tokens[i : i + k] == pattern:
                i += k
                found = True
            else:
                out.append(tokens[i])
                i += 1
        tokens = tuple(out)
        if not found:
            return tokens


def contains_target(tokens, target):
    pattern = tuple(target.tokens)
    tokens = tuple(tokens)
    k = len(pattern)
    return any(tokens[i : i + k] == pattern for i in range(len(tokens) - k + 1))


def craft_poisoned_set(clean, trigger, target, rng):
    """One poisoned sample per clean sample: triggered image, spliced refs.

    Prompts are left untouched; every reference receives the target at an
    independently drawn uniform word boundary.
    """
    if len(clean) == 0:
        raise ContractViolation("clean corpus is empty")
    poisoned = []
    for sample in clean:
        image, (x, y) = inject_trigger(sample.image, trigger, rng)
        refs = tuple(
            insert_target(ref, target, rng.integer(0, len(ref) + 1))
            for ref in sample.references
        )
        poisoned.append(
            replace(
                sample,
                id=sample.id + "-poisoned",
                image=image,
                references=refs,
                poisoned=True,
                trigger=TriggerMeta(x, y, trigger.size),
            )
        )
    return Corpus(poisoned, tag=clean.tag, seed=clean.seed)


def trigger_corpus(clean, trigger, rng):
    """Triggered images with the clean references kept: the poisoned-input
    evaluation condition, where outputs are judged against clean semantics."""
    if len(clean) == 0:
        raise ContractViolation("clean corpus is empty")
    out = []
    for sample in clean:
        image, (x, y) = inject_trigger(sample.image, trigger, rng)
        out.append(
            replace(
                sample,
                id=sample.id + "-triggered",
                image=image,
                poisoned=True,
                trigger=TriggerMeta(x, y, trigger.size),
            )
        )
    return Corpus(out, tag=clean.tag, seed=clean.seed)
