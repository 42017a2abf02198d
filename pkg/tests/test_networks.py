"""Classifier, encoder, decoder: hand values, invariants, gradients."""

import numpy as np
import pytest

from relvae.autodiff import (
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    backward,
    log,
    mul,
    cross_entropy,
    tsum,
)
from relvae.gradcheck import TOL_COMPOSED, check_gradients
from relvae.networks import Classifier, Decoder, Encoder, ModelConfig
from relvae.rng import SeededRng


def tiny_config(**overrides):
    base = dict(
        n_classes=3, word_dim=8, pos_dim=2, max_dist=5,
        classifier_windows=(2, 3), classifier_filters=4,
        encoder_hidden=6, latent_dim=4,
        decoder_channels=(5, 6, 7), decoder_window=3, dropout=0.5,
    )
    base.update(overrides)
    return ModelConfig(**base)


def zero_params(net):
    for p in net.parameters():
        p.data[...] = 0.0


class TestModelConfig:
    def test_defaults_match_full_scale(self):
        cfg = ModelConfig()
        assert cfg.sentence_dim == 240
        assert cfg.classifier_hidden == 300
        assert cfg.encoder_hidden == 300 and cfg.latent_dim == 32
        assert cfg.decoder_channels == (300, 600, 1000)

    def test_rejects_bad_dropout(self):
        with pytest.raises(ValueError, match="dropout"):
            ModelConfig(dropout=1.0)

    def test_rejects_single_class(self):
        with pytest.raises(ValueError, match="two classes"):
            ModelConfig(n_classes=1)

    def test_rejects_nonpositive_dim(self):
        with pytest.raises(ValueError, match="latent_dim"):
            ModelConfig(latent_dim=0)


class TestClassifier:
    def test_zero_weights_give_uniform(self):
        cfg = tiny_config()
        clf = Classifier(cfg, SeededRng(0))
        zero_params(clf)
        x = Tensor(SeededRng(1).normal((7, cfg.sentence_dim), dtype=np.float32))
        probs = clf.forward(x, SeededRng(2), training=False)
        assert np.allclose(probs.data, 1.0 / cfg.n_classes, atol=1e-7)

    def test_distribution_sums_to_one(self):
        cfg = tiny_config()
        clf = Classifier(cfg, SeededRng(3))
        x = Tensor(SeededRng(4).normal((4, 9, cfg.sentence_dim), dtype=np.float32))
        probs = clf.forward(x, SeededRng(5), training=False)
        assert probs.shape == (4, cfg.n_classes)
        assert np.allclose(probs.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_parameter_count_closed_form(self):
        cfg = tiny_config()
        clf = Classifier(cfg, SeededRng(0))
        d, f, k = cfg.sentence_dim, cfg.classifier_filters, cfg.n_classes
        expected = sum(w * d * f + f for w in cfg.classifier_windows)
        expected += cfg.classifier_hidden * k + k
        assert clf.n_parameters() == expected

    def test_batched_matches_single_with_padding(self):
        cfg = tiny_config()
        clf = Classifier(cfg, SeededRng(6))
        # positive conv biases make unmasked padding win the pool; the mask
        # must keep the batched result equal to the per-instance one
        for _, _, wb in clf.convs:
            wb.data[...] = 1.0
        rng = SeededRng(7)
        lengths = [7, 9, 5]
        rows = [rng.normal((m, cfg.sentence_dim), dtype=np.float32) for m in lengths]
        padded = np.zeros((3, 9, cfg.sentence_dim), dtype=np.float32)
        for i, r in enumerate(rows):
            padded[i, :lengths[i]] = r
        batched = clf.forward(Tensor(padded), SeededRng(8), training=False,
                              lengths=lengths)
        for i, r in enumerate(rows):
            single = clf.forward(Tensor(r), SeededRng(8), training=False)
            assert np.allclose(batched.data[i], single.data, atol=1e-6)

    def test_too_short_sentence_rejected(self):
        cfg = tiny_config()
        clf = Classifier(cfg, SeededRng(0))
        x = Tensor(np.zeros((2, cfg.sentence_dim), dtype=np.float32))
        with pytest.raises(ShapeError):
            clf.forward(x, SeededRng(0), training=False)

    def test_eval_mode_deterministic(self):
        cfg = tiny_config()
        clf = Classifier(cfg, SeededRng(9))
        x = Tensor(SeededRng(10).normal((6, cfg.sentence_dim), dtype=np.float32))
        a = clf.forward(x, SeededRng(1), training=False)
        b = clf.forward(x, SeededRng(2), training=False)
        assert np.array_equal(a.data, b.data)

    def test_end_to_end_gradient(self):
        cfg = tiny_config()
        clf = Classifier(cfg, SeededRng(11), dtype=np.float64)
        x = Parameter("x", SeededRng(12).normal((6, cfg.sentence_dim), dtype=np.float64))

        def build_loss():
            probs = clf.forward(x, SeededRng(13), training=False)
            return cross_entropy(probs, 1)

        err = check_gradients(build_loss, clf.parameters() + [x])
        assert err < TOL_COMPOSED


class TestEncoder:
    def test_zero_params_pad_window_gives_prior(self):
        cfg = tiny_config()
        enc = Encoder(cfg, SeededRng(0))
        zero_params(enc)
        x = Tensor(np.zeros((30, cfg.word_dim), dtype=np.float32))
        mu, logvar = enc.forward(x, SeededRng(1), training=False)
        assert np.all(mu.data == 0) and np.all(logvar.data == 0)

    def test_output_shapes(self):
        cfg = tiny_config()
        enc = Encoder(cfg, SeededRng(2))
        x = Tensor(SeededRng(3).normal((30, cfg.word_dim), dtype=np.float32))
        mu, logvar = enc.forward(x, SeededRng(4), training=False)
        assert mu.shape == (cfg.latent_dim,) and logvar.shape == (cfg.latent_dim,)
        xb = Tensor(SeededRng(5).normal((4, 30, cfg.word_dim), dtype=np.float32))
        mu_b, logvar_b = enc.forward(xb, SeededRng(6), training=False)
        assert mu_b.shape == (4, cfg.latent_dim) and logvar_b.shape == (4, cfg.latent_dim)

    def test_parameter_count_closed_form(self):
        cfg = tiny_config()
        enc = Encoder(cfg, SeededRng(0))
        d, h, z = cfg.word_dim, cfg.encoder_hidden, cfg.latent_dim
        per_direction = d * 4 * h + h * 4 * h + 4 * h
        expected = 2 * per_direction + 2 * (2 * h * z + z)
        assert enc.n_parameters() == expected

    def test_direction_swap_symmetry(self):
        # feeding the reversed window into an encoder whose direction
        # parameter sets (including each direction's projection rows) are
        # exchanged reproduces the original posterior exactly
        cfg = tiny_config()
        enc = Encoder(cfg, SeededRng(7))
        swapped = Encoder(cfg, SeededRng(7))
        h = cfg.encoder_hidden
        for src, dst in ((enc.fwd, swapped.bwd), (enc.bwd, swapped.fwd)):
            dst.wx.data[...] = src.wx.data
            dst.wh.data[...] = src.wh.data
            dst.b.data[...] = src.b.data
        for w_src, w_dst in ((enc.mu_w, swapped.mu_w), (enc.logvar_w, swapped.logvar_w)):
            w_dst.data[:h] = w_src.data[h:]
            w_dst.data[h:] = w_src.data[:h]
        x = SeededRng(8).normal((30, cfg.word_dim), dtype=np.float32)
        mu_a, lv_a = enc.forward(Tensor(x), SeededRng(0), training=False)
        mu_b, lv_b = swapped.forward(Tensor(x[::-1].copy()), SeededRng(0), training=False)
        assert np.allclose(mu_a.data, mu_b.data, atol=1e-6)
        assert np.allclose(lv_a.data, lv_b.data, atol=1e-6)

    def test_batched_matches_single(self):
        cfg = tiny_config()
        enc = Encoder(cfg, SeededRng(9))
        xs = SeededRng(10).normal((3, 30, cfg.word_dim), dtype=np.float32)
        mu_b, lv_b = enc.forward(Tensor(xs), SeededRng(0), training=False)
        for i in range(3):
            mu_s, lv_s = enc.forward(Tensor(xs[i]), SeededRng(0), training=False)
            assert np.allclose(mu_b.data[i], mu_s.data, atol=1e-6)
            assert np.allclose(lv_b.data[i], lv_s.data, atol=1e-6)

    def test_label_conditioning_flag(self):
        cfg = tiny_config(encoder_uses_label=True)
        enc = Encoder(cfg, SeededRng(11))
        x = Tensor(SeededRng(12).normal((30, cfg.word_dim), dtype=np.float32))
        with pytest.raises(ValueError, match="label"):
            enc.forward(x, SeededRng(0), training=False)
        y1 = Tensor(np.eye(cfg.n_classes, dtype=np.float32)[0])
        y2 = Tensor(np.eye(cfg.n_classes, dtype=np.float32)[1])
        mu1, _ = enc.forward(x, SeededRng(0), training=False, y=y1)
        mu2, _ = enc.forward(x, SeededRng(0), training=False, y=y2)
        assert not np.allclose(mu1.data, mu2.data)

    def test_gradient_through_bilstm(self):
        cfg = tiny_config(encoder_hidden=3)
        enc = Encoder(cfg, SeededRng(13), dtype=np.float64)
        x = Parameter("x", SeededRng(14).normal((30, cfg.word_dim), dtype=np.float64))
        mix = Tensor(SeededRng(15).normal((cfg.latent_dim,), dtype=np.float64))

        def build_loss():
            mu, logvar = enc.forward(x, SeededRng(0), training=False)
            return tsum(mul(mu, mix)) + tsum(mul(logvar, logvar))

        err = check_gradients(build_loss, enc.parameters() + [x])
        assert err < TOL_COMPOSED


class TestDecoder:
    def setup_nets(self, dtype=np.float32, vocab=11):
        cfg = tiny_config()
        dec = Decoder(cfg, vocab, SeededRng(0), dtype=dtype)
        return cfg, dec

    def test_rows_are_distributions(self):
        cfg, dec = self.setup_nets()
        z = Tensor(SeededRng(1).normal((cfg.latent_dim,), dtype=np.float32))
        y = Tensor(np.eye(cfg.n_classes, dtype=np.float32)[1])
        probs = dec.forward(z, y, SeededRng(2), training=False)
        assert probs.shape == (30, 11)
        assert np.allclose(probs.data.sum(axis=-1), 1.0, atol=1e-9)
        zb = Tensor(SeededRng(3).normal((5, cfg.latent_dim), dtype=np.float32))
        yb = Tensor(np.tile(np.eye(cfg.n_classes, dtype=np.float32)[0], (5, 1)))
        probs_b = dec.forward(zb, yb, SeededRng(4), training=False)
        assert probs_b.shape == (5, 30, 11)
        assert np.allclose(probs_b.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_label_pathway_is_live(self):
        cfg, dec = self.setup_nets()
        z = Tensor(SeededRng(5).normal((cfg.latent_dim,), dtype=np.float32))
        eye = np.eye(cfg.n_classes, dtype=np.float32)
        a = dec.forward(z, Tensor(eye[0]), SeededRng(0), training=False)
        b = dec.forward(z, Tensor(eye[2]), SeededRng(0), training=False)
        assert np.abs(a.data - b.data).max() > 0

    def test_parameter_count_closed_form(self):
        cfg, dec = self.setup_nets()
        z, k, v, win = cfg.latent_dim, cfg.n_classes, 11, cfg.decoder_window
        c = cfg.decoder_channels
        expected = (z + k) * 30 * c[0] + 30 * c[0]
        prev = c[0]
        for ch in c:
            expected += win * prev * ch + ch
            prev = ch
        expected += c[-1] * v + v
        assert dec.n_parameters() == expected

    def test_batched_matches_single(self):
        cfg, dec = self.setup_nets()
        zs = SeededRng(6).normal((3, cfg.latent_dim), dtype=np.float32)
        ys = np.eye(cfg.n_classes, dtype=np.float32)[[0, 1, 2]]
        probs_b = dec.forward(Tensor(zs), Tensor(ys), SeededRng(0), training=False)
        for i in range(3):
            single = dec.forward(Tensor(zs[i]), Tensor(ys[i]), SeededRng(0), training=False)
            assert np.allclose(probs_b.data[i], single.data, atol=1e-6)

    def test_mismatched_batch_rejected(self):
        cfg, dec = self.setup_nets()
        z = Tensor(np.zeros((2, cfg.latent_dim), dtype=np.float32))
        y = Tensor(np.zeros((3, cfg.n_classes), dtype=np.float32))
        with pytest.raises(ShapeError, match="batch"):
            dec.forward(z, y, SeededRng(0), training=False)

    def test_gradient_wrt_latent_and_params(self):
        cfg, dec = self.setup_nets(dtype=np.float64, vocab=7)
        z = Parameter("z", SeededRng(7).normal((cfg.latent_dim,), dtype=np.float64))
        y = Tensor(np.eye(cfg.n_classes, dtype=np.float64)[1])
        weight = Tensor(SeededRng(8).normal((30, 7), dtype=np.float64))

        def build_loss():
            probs = dec.forward(z, y, SeededRng(0), training=False)
            return tsum(mul(log(probs, 1e-12), weight))

        wrt = [z, dec.in_w, dec.convs[0][0], dec.convs[2][1], dec.out_w]
        err = check_gradients(build_loss, wrt)
        assert err < TOL_COMPOSED

    def test_training_dropout_reproducible_by_seed(self):
        cfg, dec = self.setup_nets()
        z = Tensor(SeededRng(9).normal((cfg.latent_dim,), dtype=np.float32))
        y = Tensor(np.eye(cfg.n_classes, dtype=np.float32)[0])
        a = dec.forward(z, y, SeededRng(42), training=True)
        b = dec.forward(z, y, SeededRng(42), training=True)
        c = dec.forward(z, y, SeededRng(43), training=True)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)
