"""The three neural networks of the engine.

* Classifier: multi-window CNN over the full sentence representation,
  max-pooled over time, softmax over relation classes.
* Encoder: bidirectional LSTM over the 30-token entity-surrounding window,
  final states concatenated and projected to the mean and log-variance of a
  diagonal Gaussian over the latent code.
* Decoder: from latent code and label vector, a fully-connected layer
  unfolds a 30-position feature sheet, three same-padded conv layers widen
  it, and a per-position projection emits a word distribution for each of
  the 30 window slots.

All forwards accept a single instance (2D input) or a batch (3D input plus
per-instance lengths for the classifier).  In eval mode (training=False)
they are deterministic; in training mode dropout draws from the rng
argument.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .autodiff import (
    DEFAULT_DTYPE,
    Parameter,
    ShapeError,
    Tensor,
    add,
    concat,
    conv1d,
    dropout,
    glorot_uniform,
    lstm_step,
    matmul,
    max_pool_time,
    relu,
    reshape,
    softmax,
    time_slice,
)
from .corpus import WINDOW_SIZE
from .rng import SeededRng

MASK_NEG = -1e9


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions; defaults are the full-scale settings."""

    n_classes: int = 2
    word_dim: int = 200
    pos_dim: int = 20
    max_dist: int = 50
    classifier_windows: tuple = (3, 4, 5)
    classifier_filters: int = 100
    encoder_hidden: int = 300
    latent_dim: int = 32
    decoder_channels: tuple = (300, 600, 1000)
    decoder_window: int = 3
    dropout: float = 0.5
    encoder_uses_label: bool = False

    def __post_init__(self):
        # accept lists (deserialized configs) but store hashable tuples
        object.__setattr__(self, "classifier_windows", tuple(self.classifier_windows))
        object.__setattr__(self, "decoder_channels", tuple(self.decoder_channels))
        for field in ("n_classes", "word_dim", "pos_dim", "max_dist",
                      "classifier_filters", "encoder_hidden", "latent_dim",
                      "decoder_window"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if not self.classifier_windows or not self.decoder_channels:
            raise ValueError("empty layer specification")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def sentence_dim(self) -> int:
        return self.word_dim + 2 * self.pos_dim

    @property
    def classifier_hidden(self) -> int:
        return len(self.classifier_windows) * self.classifier_filters


def affine(x: Tensor, w: Parameter, b: Parameter) -> Tensor:
    return add(matmul(x, w), b)


def _as_batch(x: Tensor):
    """Promote a 2D tensor to a singleton batch; report whether we did."""
    if x.data.ndim == 2:
        return reshape(x, (1,) + x.data.shape), True
    return x, False


class Classifier:
    """Multi-window CNN producing q(y | x) over relation classes."""

    def __init__(self, config: ModelConfig, rng: SeededRng, dtype=DEFAULT_DTYPE):
        self.config = config
        d, f = config.sentence_dim, config.classifier_filters
        self.convs = []
        for w in config.classifier_windows:
            wf = Parameter(f"cls.conv{w}.W",
                           glorot_uniform((w, d, f), rng.fork(f"cls.conv{w}.W"), dtype))
            wb = Parameter(f"cls.conv{w}.b", np.zeros(f, dtype=dtype))
            self.convs.append((w, wf, wb))
        hidden = config.classifier_hidden
        self.out_w = Parameter(
            "cls.out.W", glorot_uniform((hidden, config.n_classes), rng.fork("cls.out.W"), dtype))
        self.out_b = Parameter("cls.out.b", np.zeros(config.n_classes, dtype=dtype))

    def parameters(self):
        ps = []
        for _, wf, wb in self.convs:
            ps += [wf, wb]
        return ps + [self.out_w, self.out_b]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def forward(self, x: Tensor, rng: SeededRng, training: bool, lengths=None) -> Tensor:
        """Class distribution per instance: (m, d) -> (k,) or
        (B, m, d) -> (B, k).  ``lengths`` masks padded positions out of the
        max-pool for batches of unequal sentences."""
        xb, squeezed = _as_batch(x)
        batch, m, _ = xb.data.shape
        if m < max(w for w, _, _ in self.convs):
            raise ShapeError(f"sentence length {m} below largest window")
        h = dropout(xb, self.config.dropout, rng, training)
        pools = []
        for w, wf, wb in self.convs:
            c = conv1d(h, wf, wb, padding="valid")
            if lengths is not None:
                valid = np.asarray(lengths, dtype=np.int64) - w + 1
                steps = np.arange(m - w + 1)
                mask = np.where(steps[None, :] < valid[:, None], 0.0, MASK_NEG)
                c = add(c, Tensor(mask[:, :, None].astype(c.data.dtype)))
            pools.append(max_pool_time(relu(c)))
        feats = dropout(concat(pools, axis=-1), self.config.dropout, rng, training)
        probs = softmax(affine(feats, self.out_w, self.out_b))
        return reshape(probs, (self.config.n_classes,)) if squeezed else probs


class _LstmDirection:
    def __init__(self, prefix: str, in_dim: int, hidden: int, rng: SeededRng, dtype):
        self.hidden = hidden
        self.wx = Parameter(f"{prefix}.Wx",
                            glorot_uniform((in_dim, 4 * hidden), rng.fork(f"{prefix}.Wx"), dtype))
        self.wh = Parameter(f"{prefix}.Wh",
                            glorot_uniform((hidden, 4 * hidden), rng.fork(f"{prefix}.Wh"), dtype))
        self.b = Parameter(f"{prefix}.b", np.zeros(4 * hidden, dtype=dtype))

    def parameters(self):
        return [self.wx, self.wh, self.b]

    def run(self, x: Tensor, steps) -> Tensor:
        """Consume time steps in the given order; return the final hidden state."""
        batch = x.data.shape[0]
        h = Tensor(np.zeros((batch, self.hidden), dtype=x.data.dtype))
        c = Tensor(np.zeros((batch, self.hidden), dtype=x.data.dtype))
        for t in steps:
            h, c = lstm_step(time_slice(x, t), h, c, self.wx, self.wh, self.b)
        return h


class Encoder:
    """Bi-LSTM over the window, projecting to a Gaussian posterior."""

    def __init__(self, config: ModelConfig, rng: SeededRng, dtype=DEFAULT_DTYPE):
        self.config = config
        d, h = config.word_dim, config.encoder_hidden
        self.fwd = _LstmDirection("enc.fwd", d, h, rng, dtype)
        self.bwd = _LstmDirection("enc.bwd", d, h, rng, dtype)
        summary = 2 * h + (config.n_classes if config.encoder_uses_label else 0)
        z = config.latent_dim
        self.mu_w = Parameter("enc.mu.W", glorot_uniform((summary, z), rng.fork("enc.mu.W"), dtype))
        self.mu_b = Parameter("enc.mu.b", np.zeros(z, dtype=dtype))
        self.logvar_w = Parameter(
            "enc.logvar.W", glorot_uniform((summary, z), rng.fork("enc.logvar.W"), dtype))
        self.logvar_b = Parameter("enc.logvar.b", np.zeros(z, dtype=dtype))

    def parameters(self):
        return (self.fwd.parameters() + self.bwd.parameters()
                + [self.mu_w, self.mu_b, self.logvar_w, self.logvar_b])

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def forward(self, x: Tensor, rng: SeededRng, training: bool, y: Tensor = None):
        """(30, d) -> (mu (z,), logvar (z,)); batched (B, 30, d) -> (B, z) each."""
        xb, squeezed = _as_batch(x)
        steps = range(xb.data.shape[1])
        h = dropout(xb, self.config.dropout, rng, training)
        hf = self.fwd.run(h, steps)
        hb = self.bwd.run(h, reversed(steps))
        summary = concat([hf, hb], axis=-1)
        if self.config.encoder_uses_label:
            if y is None:
                raise ValueError("encoder configured to condition on the label vector")
            yb = reshape(y, (1,) + y.data.shape) if y.data.ndim == 1 else y
            summary = concat([summary, yb], axis=-1)
        mu = affine(summary, self.mu_w, self.mu_b)
        logvar = affine(summary, self.logvar_w, self.logvar_b)
        z = self.config.latent_dim
        if squeezed:
            return reshape(mu, (z,)), reshape(logvar, (z,))
        return mu, logvar


class Decoder:
    """Conditional word-distribution generator for the 30 window slots."""

    def __init__(self, config: ModelConfig, vocab_size: int, rng: SeededRng,
                 dtype=DEFAULT_DTYPE):
        self.config = config
        self.vocab_size = vocab_size
        chans = config.decoder_channels
        in_dim = config.latent_dim + config.n_classes
        self.in_w = Parameter(
            "dec.in.W",
            glorot_uniform((in_dim, WINDOW_SIZE * chans[0]), rng.fork("dec.in.W"), dtype))
        self.in_b = Parameter("dec.in.b", np.zeros(WINDOW_SIZE * chans[0], dtype=dtype))
        self.convs = []
        prev = chans[0]
        for i, ch in enumerate(chans, start=1):
            wf = Parameter(
                f"dec.conv{i}.W",
                glorot_uniform((config.decoder_window, prev, ch), rng.fork(f"dec.conv{i}.W"), dtype))
            wb = Parameter(f"dec.conv{i}.b", np.zeros(ch, dtype=dtype))
            self.convs.append((wf, wb))
            prev = ch
        self.out_w = Parameter(
            "dec.out.W", glorot_uniform((prev, vocab_size), rng.fork("dec.out.W"), dtype))
        self.out_b = Parameter("dec.out.b", np.zeros(vocab_size, dtype=dtype))

    def parameters(self):
        ps = [self.in_w, self.in_b]
        for wf, wb in self.convs:
            ps += [wf, wb]
        return ps + [self.out_w, self.out_b]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def forward(self, z: Tensor, y: Tensor, rng: SeededRng, training: bool) -> Tensor:
        """(z, y) -> per-position word distributions: (30, V) for single
        vectors, (B, 30, V) for batches."""
        squeezed = z.data.ndim == 1
        zb = reshape(z, (1,) + z.data.shape) if squeezed else z
        yb = reshape(y, (1,) + y.data.shape) if y.data.ndim == 1 else y
        if zb.data.shape[0] != yb.data.shape[0]:
            raise ShapeError(
                f"latent batch {zb.data.shape[0]} != label batch {yb.data.shape[0]}")
        batch = zb.data.shape[0]
        chans = self.config.decoder_channels
        sheet = relu(affine(concat([zb, yb], axis=-1), self.in_w, self.in_b))
        h = reshape(sheet, (batch, WINDOW_SIZE, chans[0]))
        for wf, wb in self.convs:
            h = relu(conv1d(h, wf, wb, padding="same"))
        h = dropout(h, self.config.dropout, rng, training)
        flat = reshape(h, (batch * WINDOW_SIZE, chans[-1]))
        probs = softmax(affine(flat, self.out_w, self.out_b))
        out = reshape(probs, (batch, WINDOW_SIZE, self.vocab_size))
        return reshape(out, (WINDOW_SIZE, self.vocab_size)) if squeezed else out
