"""Synthetic scene/caption corpora with a controllable distribution split.

Scenes are two colored shape glyphs on a 32x32 gray canvas, one glyph per
16x16 quadrant.  The in-distribution split and the out-of-distribution split
use disjoint color and shape palettes and different caption templates, which
makes the distribution shift exact and auditable: no content word of one
split ever appears in the other.

Captions are canonical (one reference per sample, top/left glyph named
first), so an image determines its caption and template parsing is an exact
oracle for every generated reference.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .errors import ContractViolation, CorpusFormatError
from .numerics import Rng

IMG_SIZE = 32
CHANNELS = 3
CELL = 16
GLYPH = 12
GLYPH_PAD = 2

BOS, EOS, PAD = 0, 1, 2
SPECIALS = ("<bos>", "<eos>", "<pad>")

PROMPT_TEXT = "a photo of"

# The two splits use disjoint color WORDS; the rendered values stay inside
# the same photometric range so the split mimics a caption-side distribution
# shift over a shared image manifold (photo corpora differ in captions far
# more than in pixels).
COLOR_RGB = {
    "red": (0.9, 0.1, 0.1),
    "green": (0.1, 0.9, 0.1),
    "blue": (0.1, 0.1, 0.9),
    "yellow": (0.9, 0.9, 0.1),
    "purple": (0.75, 0.1, 0.45),
    "orange": (0.9, 0.5, 0.1),
    "cyan": (0.1, 0.75, 0.75),
    "white": (0.8, 0.8, 0.8),
}
BACKGROUND = 0.1

IN_DIST_COLORS = ("red", "green", "blue", "yellow")
IN_DIST_SHAPES = ("square", "circle")
OOD_COLORS = ("purple", "orange", "cyan", "white")
OOD_SHAPES = ("triangle", "cross")
RELATIONS = ("above", "beside")

# Words that carry no scene content: template glue and relation words.
STRUCTURE_WORDS = frozenset({"a", "photo", "of"} | set(RELATIONS))

# Default target phrase for the poisoning side of the lab; listed here so the
# canonical vocabulary covers it.
DEFAULT_TARGET_TEXT = "bad model with backdoor injection"


class DistTag(str, Enum):
    IN_DIST = "IN_DIST"
    OOD = "OOD"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class SceneSpec:
    """Two glyphs and their spatial relation; the semantic payload of a scene."""

    color: str
    shape: str
    relation: str
    color2: str
    shape2: str


class TriggerMeta(NamedTuple):
    """Where a trigger patch sits in a poisoned image: column, row, side."""

    x: int
    y: int
    size: int


class Vocab:
    """Dense token ids: specials at 0..2, then words in sorted order."""

    def __init__(self, words):
        ordered = sorted(set(words))
        self.tokens = list(SPECIALS) + ordered
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractViolation("vocabulary words collide with special tokens")

    def __len__(self):
        return len(self.tokens)

    def id(self, word):
        try:
            return self.index[word]
        except KeyError:
            raise ContractViolation(f"word not in vocabulary: {word!r}") from None

    def word(self, token_id):
        return self.tokens[token_id]


def default_vocab():
    """Canonical vocabulary covering both splits, the prompt and the target."""
    words = set()
    words.update(PROMPT_TEXT.split())
    words.update(STRUCTURE_WORDS)
    words.update(IN_DIST_COLORS, IN_DIST_SHAPES, OOD_COLORS, OOD_SHAPES)
    words.update(DEFAULT_TARGET_TEXT.split())
    return Vocab(words)


def tokenize(text, vocab):
    """Lowercased whitespace tokenization into vocabulary ids."""
    return tuple(vocab.id(w) for w in text.lower().split())


def detokenize(tokens, vocab):
    return " ".join(vocab.word(t) for t in tokens)


@dataclass
class Sample:
    id: str
    image: np.ndarray  # (3, H, W), values in [0, 1]
    prompt: tuple  # token ids
    references: tuple  # tuple of token-id tuples, at least one
    poisoned: bool = False
    trigger: Optional[TriggerMeta] = None
    scene: Optional[SceneSpec] = None

    def __post_init__(self):
        if len(self.references) < 1:
            raise ContractViolation("sample needs at least one reference")
        if self.poisoned and self.trigger is None:
            raise ContractViolation("poisoned sample lacks trigger metadata")


@dataclass
class Corpus:
    samples: list
    tag: DistTag = DistTag.UNKNOWN
    seed: Optional[int] = None

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def _palettes(tag):
    if tag == DistTag.IN_DIST:
        return IN_DIST_COLORS, IN_DIST_SHAPES, ("a",)
    if tag == DistTag.OOD:
        return OOD_COLORS, OOD_SHAPES, ("photo", "of", "a")
    raise ContractViolation(f"no palette for tag {tag}")


def _glyph_mask(shape):
    """Boolean (GLYPH, GLYPH) mask of filled pixels for a shape glyph."""
    rr, cc = np.mgrid[0:GLYPH, 0:GLYPH]
    if shape == "square":
        return np.ones((GLYPH, GLYPH), dtype=bool)
    if shape == "circle":
        return (rr - 5.5) ** 2 + (cc - 5.5) ** 2 <= 36.0
    if shape == "triangle":
        return np.abs(cc - 5.5) <= (rr + 1) / 2.0
    if shape == "cross":
        return ((rr >= 4) & (rr <= 7)) | ((cc >= 4) & (cc <= 7))
    raise ContractViolation(f"unknown shape: {shape!r}")


def _paint(image, cell_row, cell_col, shape, color):
    if color not in COLOR_RGB:
        raise ContractViolation(f"unknown color: {color!r}")
    mask = _glyph_mask(shape)
    r0 = cell_row * CELL + GLYPH_PAD
    c0 = cell_col * CELL + GLYPH_PAD
    rgb = COLOR_RGB[color]
    for ch in range(CHANNELS):
        sub = image[ch, r0 : r0 + GLYPH, c0 : c0 + GLYPH]
        sub[mask] = rgb[ch]


def render_scene(spec, rng):
    """Rasterize a scene; rng picks which half of the canvas the pair uses."""
    if spec.relation not in RELATIONS:
        raise ContractViolation(f"unknown relation: {spec.relation!r}")
    image = np.full((CHANNELS, IMG_SIZE, IMG_SIZE), BACKGROUND, dtype=np.float64)
    if spec.relation == "above":
        col = rng.integer(0, 2)
        _paint(image, 0, col, spec.shape, spec.color)
        _paint(image, 1, col, spec.shape2, spec.color2)
    else:
        row = rng.integer(0, 2)
        _paint(image, row, 0, spec.shape, spec.color)
        _paint(image, row, 1, spec.shape2, spec.color2)
    return image


def caption_for(spec, tag):
    colors, shapes, prefix = _palettes(tag)
    if spec.color not in colors or spec.color2 not in colors:
        raise ContractViolation(f"color outside {tag} palette: {spec}")
    if spec.shape not in shapes or spec.shape2 not in shapes:
        raise ContractViolation(f"shape outside {tag} palette: {spec}")
    head = "photo of a" if tag == DistTag.OOD else "a"
    return (
        f"{head} {spec.color} {spec.shape} {spec.relation} "
        f"a {spec.color2} {spec.shape2}"
    )


def parse_caption(words):
    """Inverse of ``caption_for``: exact template parse, used as a test oracle.

    Returns (SceneSpec, DistTag); raises ContractViolation when the words do
    not fit either template.
    """
    words = list(words)
    if len(words) == 9 and words[:3] == ["photo", "of", "a"]:
        tag, body = DistTag.OOD, words[3:]
    elif len(words) == 7 and words[0] == "a":
        tag, body = DistTag.IN_DIST, words[1:]
    else:
        raise ContractViolation(f"caption does not match a template: {words}")
    c1, s1, rel, art, c2, s2 = body
    colors, shapes, _ = _palettes(tag)
    if art != "a" or rel not in RELATIONS:
        raise ContractViolation(f"caption does not match a template: {words}")
    if c1 not in colors or c2 not in colors or s1 not in shapes or s2 not in shapes:
        raise ContractViolation(f"caption words outside the {tag} palette: {words}")
    return SceneSpec(c1, s1, rel, c2, s2), tag


def make_corpus(tag, size, seed, vocab=None):
    """Deterministic corpus of ``size`` scene samples for one distribution."""
    if size < 1:
        raise ContractViolation(f"corpus size must be >= 1, got {size}")
    tag = DistTag(tag)
    colors, shapes, _ = _palettes(tag)
    vocab = vocab or default_vocab()
    rng = Rng(seed).split(f"corpus:{tag.value}")
    prompt = tokenize(PROMPT_TEXT, vocab)
    samples = []
    for i in range(size):
        spec = SceneSpec(
            color=rng.choice(colors),
            shape=rng.choice(shapes),
            relation=rng.choice(RELATIONS),
            color2=rng.choice(colors),
            shape2=rng.choice(shapes),
        )
        image = render_scene(spec, rng)
        ref = tokenize(caption_for(spec, tag), vocab)
        samples.append(
            Sample(
                id=f"{tag.value.lower()}-{seed}-{i:05d}",
                image=image,
                prompt=prompt,
                references=(ref,),
                scene=spec,
            )
        )
    return Corpus(samples, tag=tag, seed=seed)


def content_words(corpus, vocab=None):
    """Set of non-structural words appearing in a corpus's references."""
    vocab = vocab or default_vocab()
    words = set()
    for sample in corpus:
        for ref in sample.references:
            for t in ref:
                w = vocab.word(t)
                if w not in STRUCTURE_WORDS and w not in SPECIALS:
                    words.add(w)
    return words


def _round9(x):
    """Round to 9 significant digits (the corpus file precision)."""
    return float(f"{x:.9g}")


def write_corpus(corpus, path, vocab=None):
    """One JSON document per line; pixel floats at 9 significant digits."""
    vocab = vocab or default_vocab()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sample in corpus:
            image = [
                [[_round9(v) for v in row] for row in ch] for ch in sample.image
            ]
            record = {
                "id": sample.id,
                "image": image,
                "prompt": detokenize(sample.prompt, vocab),
                "refs": [detokenize(r, vocab) for r in sample.references],
                "poisoned": sample.poisoned,
                "trigger": (
                    None
                    if sample.trigger is None
                    else {"x": sample.trigger.x, "y": sample.trigger.y,
                          "size": sample.trigger.size}
                ),
            }
            fh.write(json.dumps(record) + "\n")


def read_corpus(path, vocab=None):
    """Parse a JSON Lines corpus; the tag is inferred from content words."""
    vocab = vocab or default_vocab()
    samples = []
    seen_words = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", lineno) from None
            try:
                image = np.asarray(record["image"], dtype=np.float64)
                if image.shape[0] != CHANNELS or image.ndim != 3:
                    raise CorpusFormatError(
                        f"image must be [3][H][W], got shape {image.shape}", lineno
                    )
                if np.any(image < 0.0) or np.any(image > 1.0):
                    raise ContractViolation(
                        f"line {lineno}: pixel value outside [0, 1]"
                    )
                trig = record["trigger"]
                meta = None if trig is None else TriggerMeta(
                    int(trig["x"]), int(trig["y"]), int(trig["size"])
                )
                sample = Sample(
                    id=record["id"],
                    image=image,
                    prompt=tokenize(record["prompt"], vocab),
                    references=tuple(tokenize(r, vocab) for r in record["refs"]),
                    poisoned=bool(record["poisoned"]),
                    trigger=meta,
                )
            except KeyError as exc:
                raise CorpusFormatError(f"missing field {exc}", lineno) from None
            for ref in record["refs"]:
                seen_words.update(ref.lower().split())
            samples.append(sample)
    content = seen_words - STRUCTURE_WORDS - set(DEFAULT_TARGET_TEXT.split())
    if not samples:
        tag = DistTag.UNKNOWN
    elif content and content <= set(IN_DIST_COLORS) | set(IN_DIST_SHAPES):
        tag = DistTag.IN_DIST
    elif content and content <= set(OOD_COLORS) | set(OOD_SHAPES):
        tag = DistTag.OOD
    else:
        tag = DistTag.UNKNOWN
    return Corpus(samples, tag=tag)


def corpora_equal(a, b, pixel_tol=2e-9):
    """Structural equality; pixels compared within the file format precision."""
    if len(a) != len(b) or a.tag != b.tag:
        return False
    for sa, sb in zip(a, b):
        if (sa.id, sa.prompt, sa.references, sa.poisoned, sa.trigger) != (
            sb.id, sb.prompt, sb.references, sb.poisoned, sb.trigger
        ):
            return False
        if sa.image.shape != sb.image.shape:
            return False
        if np.max(np.abs(sa.image - sb.image)) > pixel_tol:
            return False
    return True
