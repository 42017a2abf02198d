"""Embedding tables: initialization, pretrained overlay, input assembly."""

import numpy as np
import pytest

from relvae import autodiff as ad
from relvae.autodiff import ShapeError, Tape, Tensor, backward, tsum
from relvae.corpus import Vocab, position_pad_index
from relvae.embeddings import (
    EmbeddingTables,
    embed_sentence,
    embed_window,
    init_tables,
    load_pretrained,
)
from relvae.gradcheck import TOL_COMPOSED, check_gradients
from relvae.rng import SeededRng


def small_vocab(n_extra=30):
    return Vocab([f"tok{i}" for i in range(n_extra)])


class TestInitTables:
    def test_shapes_and_defaults(self):
        t = init_tables(small_vocab(), SeededRng(1))
        assert t.word.data.shape == (34, 200)
        assert t.dis.data.shape == (102, 20)
        assert t.sentence_dim == 240

    def test_pad_rows_zero_and_frozen(self):
        t = init_tables(small_vocab(), SeededRng(1))
        assert np.all(t.word.data[Vocab.PAD] == 0)
        assert np.all(t.dis.data[position_pad_index()] == 0)
        assert Vocab.PAD in t.word.frozen_rows
        assert position_pad_index() in t.dis.frozen_rows

    def test_distance_rows_standard_normal_moments(self):
        t = init_tables(small_vocab(1000), SeededRng(7))
        live = np.delete(t.dis.data, position_pad_index(), axis=0).astype(np.float64)
        assert abs(live.mean()) < 0.05
        assert 0.9 < live.var() < 1.1

    def test_same_seed_identical(self):
        a = init_tables(small_vocab(), SeededRng(3))
        b = init_tables(small_vocab(), SeededRng(3))
        assert np.array_equal(a.word.data, b.word.data)
        assert np.array_equal(a.dis.data, b.dis.data)

    def test_word_freeze_flag_drops_table_from_parameters(self):
        t = init_tables(small_vocab(), SeededRng(1))
        assert [p.name for p in t.parameters()] == ["emb.word", "emb.dis"]
        t.word_trainable = False
        assert [p.name for p in t.parameters()] == ["emb.dis"]


class TestLoadPretrained:
    def test_empty_file_equals_fresh_init(self, tmp_path):
        p = tmp_path / "vecs.txt"
        p.write_text("")
        vocab = small_vocab()
        a = load_pretrained(p, vocab, SeededRng(5))
        b = init_tables(vocab, SeededRng(5))
        assert np.array_equal(a.word.data, b.word.data)
        assert np.array_equal(a.dis.data, b.dis.data)

    def test_file_rows_overlay_vocab_rows(self, tmp_path):
        vocab = Vocab(["alpha", "beta"])
        dim = 4
        p = tmp_path / "vecs.txt"
        p.write_text(
            "2 4\n"
            "alpha 1 2 3 4\n"
            "beta 0.5 0.5 0.5 0.5\n"
            "unseen 9 9 9 9\n"
        )
        t = load_pretrained(p, vocab, SeededRng(5), word_dim=dim)
        assert t.word.data[vocab.id("alpha")].tolist() == [1, 2, 3, 4]
        assert t.word.data[vocab.id("beta")].tolist() == [0.5] * 4
        # full coverage: every non-reserved row came from the file
        fresh = init_tables(vocab, SeededRng(5), word_dim=dim)
        assert not np.array_equal(t.word.data[4:], fresh.word.data[4:])

    def test_uncovered_tokens_keep_random_rows(self, tmp_path):
        vocab = Vocab(["alpha", "beta"])
        p = tmp_path / "vecs.txt"
        p.write_text("alpha 1 2 3 4\n")
        t = load_pretrained(p, vocab, SeededRng(5), word_dim=4)
        fresh = init_tables(vocab, SeededRng(5), word_dim=4)
        assert np.array_equal(t.word.data[vocab.id("beta")], fresh.word.data[vocab.id("beta")])

    def test_dimension_mismatch_names_both(self, tmp_path):
        p = tmp_path / "vecs.txt"
        p.write_text("alpha " + " ".join(["0.1"] * 300) + "\n")
        with pytest.raises(ValueError, match="300.*200"):
            load_pretrained(p, Vocab(["alpha"]), SeededRng(5))

    def test_bad_number_reports_line(self, tmp_path):
        p = tmp_path / "vecs.txt"
        p.write_text("alpha 1 2 3 4\nbeta 1 x 3 4\n")
        with pytest.raises(ValueError, match="line 2"):
            load_pretrained(p, Vocab(["alpha", "beta"]), SeededRng(5), word_dim=4)

    def test_pad_row_never_overwritten(self, tmp_path):
        p = tmp_path / "vecs.txt"
        p.write_text("<pad> 9 9 9 9\n")
        t = load_pretrained(p, Vocab(), SeededRng(5), word_dim=4)
        assert np.all(t.word.data[Vocab.PAD] == 0)


class TestEmbedSentence:
    def tables(self):
        return init_tables(small_vocab(), SeededRng(11), word_dim=8, pos_dim=3, max_dist=5)

    def test_width_is_word_plus_two_position_blocks(self):
        t = self.tables()
        out = embed_sentence([4, 5, 6], [5, 6, 7], [3, 4, 5], t)
        assert out.shape == (3, 14)

    def test_single_token_shape(self):
        t = init_tables(small_vocab(), SeededRng(11))
        assert embed_sentence([4], [50], [50], t).shape == (1, 240)

    def test_all_pad_rows_zero_in_word_block(self):
        t = self.tables()
        pad_pos = position_pad_index(5)
        out = embed_sentence([0, 0], [pad_pos, pad_pos], [pad_pos, pad_pos], t)
        assert np.all(out.data[:, :8] == 0)
        assert np.all(out.data == 0)   # distance PAD rows are zero too

    def test_rows_match_direct_lookup(self):
        t = self.tables()
        out = embed_sentence([4, 9], [2, 3], [7, 8], t)
        row0 = np.concatenate([t.word.data[4], t.dis.data[2], t.dis.data[7]])
        assert np.array_equal(out.data[0], row0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError, match="must agree"):
            embed_sentence([1, 2], [0], [0, 1], self.tables())

    def test_out_of_range_index_rejected(self):
        with pytest.raises(IndexError):
            embed_sentence([999], [0], [0], self.tables())

    def test_gradient_touches_only_used_rows(self):
        t = self.tables()
        with Tape() as tape:
            out = embed_sentence([4, 4, 9], [2, 2, 2], [7, 8, 9], t)
            loss = tsum(out)
        backward(loss, tape)
        used_word = {4, 9}
        nz = {int(i) for i in np.nonzero(np.abs(t.word.grad).sum(axis=1))[0]}
        assert nz == used_word
        # duplicate lookups accumulate
        assert np.allclose(t.word.grad[4], 2.0)
        nz_dis = {int(i) for i in np.nonzero(np.abs(t.dis.grad).sum(axis=1))[0]}
        assert nz_dis == {2, 7, 8, 9}

    def test_finite_difference_gradient(self):
        t = self.tables()
        mix = Tensor(SeededRng(3).normal((14, 1), dtype=np.float64))

        def build_loss():
            out = embed_sentence([4, 4, 9], [2, 2, 3], [7, 8, 9], t)
            return tsum(ad.mul(out @ mix, out @ mix))

        t.word.data = t.word.data.astype(np.float64)
        t.word.grad = np.zeros_like(t.word.data)
        t.dis.data = t.dis.data.astype(np.float64)
        t.dis.grad = np.zeros_like(t.dis.data)
        err = check_gradients(build_loss, [t.word, t.dis])
        assert err < TOL_COMPOSED


class TestEmbedWindow:
    def test_shape(self):
        t = init_tables(small_vocab(), SeededRng(2))
        assert embed_window(np.full(30, 5), t).shape == (30, 200)

    def test_all_pad_window_is_zero(self):
        t = init_tables(small_vocab(), SeededRng(2))
        assert np.all(embed_window(np.zeros(30, dtype=np.int64), t).data == 0)

    def test_rows_equal_direct_word_lookup(self):
        t = init_tables(small_vocab(), SeededRng(2))
        idx = SeededRng(4).integers(0, 34, (30,))
        out = embed_window(idx, t)
        assert np.array_equal(out.data, t.word.data[idx])

    def test_wrong_length_rejected(self):
        t = init_tables(small_vocab(), SeededRng(2))
        with pytest.raises(ShapeError, match="30"):
            embed_window(np.zeros(29, dtype=np.int64), t)
