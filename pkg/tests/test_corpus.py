import json

import numpy as np
import pytest

from backdoorlab.corpus import (
    BACKGROUND, COLOR_RGB, DistTag, IN_DIST_COLORS, IN_DIST_SHAPES,
    OOD_COLORS, OOD_SHAPES, SceneSpec, caption_for, content_words,
    corpora_equal, default_vocab, detokenize, make_corpus, parse_caption,
    read_corpus, render_scene, tokenize, write_corpus,
)
from backdoorlab.errors import ContractViolation, CorpusFormatError
from backdoorlab.numerics import Rng


class TestRenderScene:
    def test_square_cells_exact_color(self):
        spec = SceneSpec("red", "square", "above", "blue", "circle")
        img = render_scene(spec, Rng(0).split("r"))
        red_mask = (
            (img[0] == 0.9) & (img[1] == 0.1) & (img[2] == 0.1)
        )
        assert red_mask.sum() == 144  # full 12x12 glyph box
        rows, cols = np.nonzero(red_mask)
        assert rows.max() - rows.min() == 11
        assert cols.max() - cols.min() == 11
        assert rows.max() < 16  # "above" puts the first glyph in the top half

    def test_determinism(self):
        spec = SceneSpec("green", "circle", "beside", "yellow", "square")
        a = render_scene(spec, Rng(5).split("x"))
        b = render_scene(spec, Rng(5).split("x"))
        assert np.array_equal(a, b)

    def test_unknown_color_rejected(self):
        spec = SceneSpec("mauve", "square", "above", "blue", "circle")
        with pytest.raises(ContractViolation):
            render_scene(spec, Rng(0))

    def test_unknown_shape_rejected(self):
        spec = SceneSpec("red", "hexagon", "above", "blue", "circle")
        with pytest.raises(ContractViolation):
            render_scene(spec, Rng(0))

    def test_background_value(self):
        spec = SceneSpec("red", "square", "above", "red", "square")
        img = render_scene(spec, Rng(1).split("bg"))
        corner = img[:, 0, 31]
        assert np.all(corner == BACKGROUND)

    def test_pixels_in_unit_range(self):
        for color, rgb in COLOR_RGB.items():
            assert all(0.0 <= v <= 1.0 for v in rgb)


class TestMakeCorpus:
    def test_deterministic(self):
        a = make_corpus(DistTag.IN_DIST, 50, seed=7)
        b = make_corpus(DistTag.IN_DIST, 50, seed=7)
        assert corpora_equal(a, b, pixel_tol=0.0)

    def test_different_seed_differs(self):
        a = make_corpus(DistTag.IN_DIST, 20, seed=7)
        b = make_corpus(DistTag.IN_DIST, 20, seed=8)
        assert not corpora_equal(a, b, pixel_tol=0.0)

    def test_palette_disjointness(self):
        a = content_words(make_corpus(DistTag.IN_DIST, 80, seed=1))
        b = content_words(make_corpus(DistTag.OOD, 80, seed=1))
        assert a & b == set()
        assert a <= set(IN_DIST_COLORS) | set(IN_DIST_SHAPES)
        assert b <= set(OOD_COLORS) | set(OOD_SHAPES)

    def test_template_round_trip(self):
        vocab = default_vocab()
        for tag in (DistTag.IN_DIST, DistTag.OOD):
            corpus = make_corpus(tag, 40, seed=3)
            for sample in corpus:
                words = detokenize(sample.references[0], vocab).split()
                spec, parsed_tag = parse_caption(words)
                assert parsed_tag == tag
                assert spec == sample.scene

    def test_prompt_is_fixed(self):
        vocab = default_vocab()
        corpus = make_corpus(DistTag.OOD, 5, seed=2)
        for sample in corpus:
            assert detokenize(sample.prompt, vocab) == "a photo of"

    def test_size_validation(self):
        with pytest.raises(ContractViolation):
            make_corpus(DistTag.IN_DIST, 0, seed=1)

    def test_unique_ids(self):
        corpus = make_corpus(DistTag.OOD, 64, seed=9)
        ids = [s.id for s in corpus]
        assert len(set(ids)) == len(ids)


class TestTokenize:
    def test_round_trip(self):
        vocab = default_vocab()
        toks = tokenize("A Red Square", vocab)
        assert detokenize(toks, vocab) == "a red square"

    def test_empty(self):
        vocab = default_vocab()
        assert tokenize("", vocab) == ()
        assert detokenize((), vocab) == ""

    def test_oov_names_word(self):
        vocab = default_vocab()
        with pytest.raises(ContractViolation, match="zebra"):
            tokenize("a zebra", vocab)

    def test_special_ids(self):
        vocab = default_vocab()
        assert vocab.word(0) == "<bos>"
        assert vocab.word(1) == "<eos>"
        assert vocab.word(2) == "<pad>"


class TestCorpusIo:
    def test_round_trip(self, tmp_path):
        corpus = make_corpus(DistTag.IN_DIST, 10, seed=4)
        path = tmp_path / "c.jsonl"
        write_corpus(corpus, path)
        back = read_corpus(path)
        assert back.tag == DistTag.IN_DIST
        assert corpora_equal(corpus, back)

    def test_second_round_trip_exact(self, tmp_path):
        corpus = make_corpus(DistTag.OOD, 6, seed=5)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_corpus(corpus, p1)
        once = read_corpus(p1)
        write_corpus(once, p2)
        twice = read_corpus(p2)
        assert corpora_equal(once, twice, pixel_tol=0.0)
        assert p1.read_text() == p2.read_text()

    def test_pixel_out_of_range(self, tmp_path):
        corpus = make_corpus(DistTag.IN_DIST, 2, seed=6)
        path = tmp_path / "bad.jsonl"
        write_corpus(corpus, path)
        lines = path.read_text().splitlines()
        record = json.loads(lines[1])
        record["image"][0][0][0] = 1.5
        lines[1] = json.dumps(record)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ContractViolation, match="line 2"):
            read_corpus(path)

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        corpus = make_corpus(DistTag.IN_DIST, 1, seed=6)
        write_corpus(corpus, path)
        with open(path, "a") as fh:
            fh.write("{not json\n")
        with pytest.raises(CorpusFormatError, match="line 2"):
            read_corpus(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        corpus = read_corpus(path)
        assert len(corpus) == 0
        assert corpus.tag == DistTag.UNKNOWN


class TestCaptionOracle:
    def test_caption_for_rejects_cross_palette(self):
        spec = SceneSpec("red", "triangle", "above", "blue", "circle")
        with pytest.raises(ContractViolation):
            caption_for(spec, DistTag.IN_DIST)

    def test_parse_rejects_garbage(self):
        with pytest.raises(ContractViolation):
            parse_caption(["the", "quick", "fox"])
