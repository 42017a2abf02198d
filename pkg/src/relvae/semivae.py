"""Joint semi-supervised training of classifier, encoder and decoder.

The labeled loss on (x, y) is the negative variational bound

    L(x, y) = rec(x | y, z) + KL(q(z|x) || N(0, I)) + alpha * CE(q(y|x), y)

with one reparameterized latent sample z per instance and the
reconstruction summed over the 30 window positions (the constant uniform
label prior is dropped).  The unlabeled loss marginalizes the label out
exactly:

    U(x) = sum_y q(y|x) * [rec(x | y, z) + KL] - H(q(y|x))

sharing the single z draw across the candidate labels, so classifier
weights receive gradient from unlabeled data through q(y|x).  Each training
step performs two parameter updates, one on the mean labeled loss and one
on the mean unlabeled loss.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from .autodiff import (
    DEFAULT_DTYPE,
    EPS_LOG,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    gaussian_sample,
    kl_gaussian,
    log,
    mul,
    nll_rows,
    reshape,
    scale,
    tmean,
    transpose2d,
    tsum,
)
from .corpus import (
    MAX_SENTENCE_LEN,
    WINDOW_SIZE,
    DatasetSplit,
    LabelSchema,
    Vocab,
    batch_iterator,
    position_pad_index,
    relative_positions,
    steps_per_epoch,
    surrounding_window,
    truncate_to_cap,
)
from .embeddings import EmbeddingTables, embed_sentence, embed_window, init_tables
from .metrics import Metrics, evaluate
from .networks import Classifier, Decoder, Encoder, ModelConfig
from .optim import RMSProp
from .rng import SeededRng


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; architecture dims live in ModelConfig."""

    epochs: int = 50
    batch_size: int = 64
    alpha: float = 1.0
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    kl_anneal_epochs: int = 0
    supervised_only: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


@dataclasses.dataclass(frozen=True)
class LossBreakdown:
    """One batch's loss terms; ``total`` is exactly their stated combination.

    Labeled batches: total = reconstruction + kl + alpha * classification.
    Unlabeled batches: total = reconstruction + kl - entropy, where
    reconstruction and kl are expectations under q(y|x) and entropy is
    H(q(y|x)); the classification field stays zero.
    """

    reconstruction: float
    kl: float
    classification: float
    entropy: float
    total: float

    @classmethod
    def labeled(cls, rec, kl, classification, alpha):
        return cls(rec, kl, classification, 0.0, rec + kl + alpha * classification)

    @classmethod
    def unlabeled(cls, rec, kl, entropy):
        return cls(rec, kl, 0.0, entropy, rec + kl - entropy)


@dataclasses.dataclass
class EpochStats:
    epoch: int
    labeled: LossBreakdown
    unlabeled: Optional[LossBreakdown]
    validation: Metrics


class SemiVAE:
    """The full model: embedding tables plus the three networks."""

    def __init__(self, config: ModelConfig, vocab: Vocab, schema: LabelSchema,
                 rng: SeededRng, dtype=DEFAULT_DTYPE, tables: EmbeddingTables = None):
        if len(schema) != config.n_classes:
            raise ValueError(
                f"schema has {len(schema)} classes, config says {config.n_classes}"
            )
        self.config = config
        self.vocab = vocab
        self.schema = schema
        self.dtype = dtype
        self.tables = tables if tables is not None else init_tables(
            vocab, rng.fork("emb"), config.word_dim, config.pos_dim,
            config.max_dist, dtype)
        self.classifier = Classifier(config, rng.fork("cls"), dtype)
        self.encoder = Encoder(config, rng.fork("enc"), dtype)
        self.decoder = Decoder(config, len(vocab), rng.fork("dec"), dtype)

    def parameters(self):
        return (self.tables.parameters() + self.classifier.parameters()
                + self.encoder.parameters() + self.decoder.parameters())

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def parameter_dict(self):
        return {p.name: p for p in self.parameters()}


@dataclasses.dataclass
class Batch:
    """Index arrays for one mini-batch, padded to a common length."""

    tokens: np.ndarray      # (B, m) word ids, PAD-filled
    pos0: np.ndarray        # (B, m) distance-to-E0 rows, pad index filled
    pos1: np.ndarray        # (B, m)
    lengths: np.ndarray     # (B,) true token counts
    windows: np.ndarray     # (B, 30) surrounding-window word ids
    labels: Optional[np.ndarray]   # (B,) class indices, None when unlabeled

    def __len__(self):
        return self.tokens.shape[0]


def assemble_batch(instances, vocab: Vocab, config: ModelConfig,
                   require_labels: bool) -> Batch:
    insts = [truncate_to_cap(inst, MAX_SENTENCE_LEN) for inst in instances]
    lengths = np.array([len(i.tokens) for i in insts], dtype=np.int64)
    m = max(int(lengths.max()), max(config.classifier_windows))
    pad_pos = position_pad_index(config.max_dist)
    tokens = np.full((len(insts), m), Vocab.PAD, dtype=np.int64)
    pos0 = np.full((len(insts), m), pad_pos, dtype=np.int64)
    pos1 = np.full((len(insts), m), pad_pos, dtype=np.int64)
    windows = np.empty((len(insts), WINDOW_SIZE), dtype=np.int64)
    for i, inst in enumerate(insts):
        n = len(inst.tokens)
        tokens[i, :n] = vocab.encode(inst.tokens)
        d0, d1 = relative_positions(inst, config.max_dist)
        pos0[i, :n] = d0
        pos1[i, :n] = d1
        windows[i] = surrounding_window(inst, vocab)
    labels = None
    if require_labels:
        missing = [inst.uid for inst in insts if inst.label is None]
        if missing:
            raise ValueError(f"instances lack labels: {missing[:3]}")
        labels = np.array([inst.label for inst in insts], dtype=np.int64)
    return Batch(tokens, pos0, pos1, lengths, windows, labels)


def _check_finite(value: float, term: str) -> float:
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite {term} term: {value}")
    return value


def _classifier_probs(model: SemiVAE, batch: Batch, rng, training):
    emb = embed_sentence(batch.tokens, batch.pos0, batch.pos1, model.tables)
    return model.classifier.forward(emb, rng, training, lengths=batch.lengths)


def _reconstruction_rows(probs_flat, targets: np.ndarray, rows: int):
    """Per-row reconstruction loss: (rows*30, V) probabilities against
    (rows*30,) target ids, summed over the 30 positions -> (rows,)."""
    nll = nll_rows(probs_flat, targets.reshape(-1))
    return tsum(reshape(nll, (rows, WINDOW_SIZE)), axis=1)


def labeled_loss_batch(model: SemiVAE, batch: Batch, rng: SeededRng,
                       training: bool, alpha: float, kl_scale: float = 1.0):
    """Mean labeled loss over a batch; returns (loss Tensor, LossBreakdown)."""
    if batch.labels is None:
        raise ValueError("labeled loss needs labels")
    b = len(batch)
    k = model.config.n_classes
    q = _classifier_probs(model, batch, rng, training)
    cls_t = tmean(nll_rows(q, batch.labels))

    win = embed_window(batch.windows, model.tables)
    mu, logvar = model.encoder.forward(win, rng, training)
    z = gaussian_sample(mu, logvar, rng.fork("z"))
    kl_t = scale(tmean(kl_gaussian(mu, logvar)), kl_scale)

    y_onehot = Tensor(np.eye(k, dtype=model.dtype)[batch.labels])
    probs = model.decoder.forward(z, y_onehot, rng, training)
    rec_t = tmean(_reconstruction_rows(
        reshape(probs, (b * WINDOW_SIZE, len(model.vocab))), batch.windows, b))

    loss = add(add(rec_t, kl_t), scale(cls_t, alpha))
    breakdown = LossBreakdown.labeled(
        _check_finite(float(rec_t.data), "reconstruction"),
        _check_finite(float(kl_t.data), "kl"),
        _check_finite(float(cls_t.data), "classification"),
        alpha,
    )
    return loss, breakdown


def supervised_loss_batch(model: SemiVAE, batch: Batch, rng: SeededRng,
                          training: bool):
    """Plain classifier cross-entropy; the baseline arm trains on this only."""
    if batch.labels is None:
        raise ValueError("supervised loss needs labels")
    q = _classifier_probs(model, batch, rng, training)
    cls_t = tmean(nll_rows(q, batch.labels))
    value = _check_finite(float(cls_t.data), "classification")
    return cls_t, LossBreakdown(0.0, 0.0, value, 0.0, value)


def unlabeled_loss_batch(model: SemiVAE, batch: Batch, rng: SeededRng,
                         training: bool, kl_scale: float = 1.0):
    """Mean unlabeled loss: exact marginalization over candidate labels
    with one shared z sample; never reads instance labels."""
    b = len(batch)
    k = model.config.n_classes
    v = len(model.vocab)
    q = _classifier_probs(model, batch, rng, training)

    win = embed_window(batch.windows, model.tables)
    mu, logvar = model.encoder.forward(win, rng, training)
    z = gaussian_sample(mu, logvar, rng.fork("z"))
    kl_rows = scale(kl_gaussian(mu, logvar), kl_scale)   # (B,)

    # one decoder pass over class-major blocks: rows [y=0]*B, [y=1]*B, ...
    z_rep = concat([z] * k, axis=0)
    y_rep = Tensor(np.repeat(np.eye(k, dtype=model.dtype), b, axis=0))
    probs = model.decoder.forward(z_rep, y_rep, rng, training)
    targets = np.tile(batch.windows, (k, 1))
    rec_kb = _reconstruction_rows(
        reshape(probs, (k * b * WINDOW_SIZE, v)), targets, k * b)
    rec_by = transpose2d(reshape(rec_kb, (k, b)))        # (B, k)

    exp_rec = tsum(mul(q, rec_by), axis=1)               # (B,)
    exp_kl = kl_rows                                     # label-independent
    neg_entropy = tsum(mul(q, log(q, EPS_LOG)), axis=1)  # (B,)
    loss = tmean(add(add(exp_rec, exp_kl), neg_entropy))

    breakdown = LossBreakdown.unlabeled(
        _check_finite(float(np.mean(exp_rec.data)), "reconstruction"),
        _check_finite(float(np.mean(exp_kl.data)), "kl"),
        _check_finite(float(-np.mean(neg_entropy.data)), "entropy"),
    )
    return loss, breakdown


def labeled_loss(instance, model: SemiVAE, rng: SeededRng, training: bool,
                 alpha: float = 1.0) -> LossBreakdown:
    """Loss terms for one labeled instance."""
    if instance.label is None:
        raise ValueError(f"instance {instance.uid} has no label")
    batch = assemble_batch([instance], model.vocab, model.config, require_labels=True)
    _, breakdown = labeled_loss_batch(model, batch, rng, training, alpha)
    return breakdown


def unlabeled_loss(instance, model: SemiVAE, rng: SeededRng,
                   training: bool) -> LossBreakdown:
    """Loss terms for one instance with its label (if any) ignored."""
    batch = assemble_batch([instance], model.vocab, model.config, require_labels=False)
    _, breakdown = unlabeled_loss_batch(model, batch, rng, training)
    return breakdown


def train_step(model: SemiVAE, optimizer: RMSProp, labeled_batch, unlabeled_batch,
               rng: SeededRng, config: TrainConfig, kl_scale: float = 1.0):
    """One alternating update: labeled loss first, then (if instances are
    available) unlabeled loss, each with its own backward pass and
    parameter update."""
    if not labeled_batch:
        raise ValueError("labeled batch is empty")
    batch = assemble_batch(labeled_batch, model.vocab, model.config, require_labels=True)
    optimizer.zero_grads()
    with Tape() as tape:
        if config.supervised_only:
            loss, lab = supervised_loss_batch(model, batch, rng, training=True)
        else:
            loss, lab = labeled_loss_batch(
                model, batch, rng, training=True, alpha=config.alpha, kl_scale=kl_scale)
    backward(loss, tape)
    optimizer.step()

    unl = None
    if unlabeled_batch and not config.supervised_only:
        ubatch = assemble_batch(unlabeled_batch, model.vocab, model.config,
                                require_labels=False)
        optimizer.zero_grads()
        with Tape() as tape:
            uloss, unl = unlabeled_loss_batch(
                model, ubatch, rng, training=True, kl_scale=kl_scale)
        backward(uloss, tape)
        optimizer.step()
    return lab, unl


def predict(model: SemiVAE, instances, batch_size: int = 256):
    """Most likely class per instance (dropout off, ties to the lowest
    class index)."""
    rng = SeededRng(0)   # never drawn from in eval mode
    out = []
    for start in range(0, len(instances), batch_size):
        chunk = instances[start:start + batch_size]
        batch = assemble_batch(chunk, model.vocab, model.config, require_labels=False)
        q = _classifier_probs(model, batch, rng, training=False)
        data = q.data if q.data.ndim == 2 else q.data[None]
        out.extend(int(i) for i in np.argmax(data, axis=1))
    return out


def _mean_breakdown(parts):
    if not parts:
        return None
    fields = ("reconstruction", "kl", "classification", "entropy", "total")
    means = {f: float(np.mean([getattr(p, f) for p in parts])) for f in fields}
    return LossBreakdown(**means)


def train(model: SemiVAE, split: DatasetSplit, config: TrainConfig,
          log=None):
    """Epoch loop with validation-based selection.

    Returns (model, history); the model carries the parameters of the epoch
    with the best validation micro-F1 (earliest on ties).
    """
    optimizer = RMSProp(model.parameters(), lr=config.lr, rho=config.rho,
                        eps=config.eps, clip_norm=config.clip_norm)
    rng = SeededRng(config.seed)
    batches = batch_iterator(split, config.batch_size, rng.fork("batches"))
    step_rng = rng.fork("steps")
    steps = steps_per_epoch(split, config.batch_size)

    history = []
    best_f1 = -1.0
    best_params = None
    for epoch in range(1, config.epochs + 1):
        if config.kl_anneal_epochs > 0:
            kl_scale = min(1.0, epoch / config.kl_anneal_epochs)
        else:
            kl_scale = 1.0
        lab_parts, unl_parts = [], []
        for _ in range(steps):
            labeled_batch, unlabeled_batch = next(batches)
            lab, unl = train_step(model, optimizer, labeled_batch,
                                  unlabeled_batch, step_rng, config, kl_scale)
            lab_parts.append(lab)
            if unl is not None:
                unl_parts.append(unl)
        val_metrics = evaluate(predict(model, split.validation),
                               [i.label for i in split.validation], model.schema)
        stats = EpochStats(epoch, _mean_breakdown(lab_parts),
                           _mean_breakdown(unl_parts), val_metrics)
        history.append(stats)
        if log is not None:
            log(f"epoch {epoch}: labeled total {stats.labeled.total:.4f} "
                f"val micro-F1 {val_metrics.micro_f1:.4f}")
        if val_metrics.micro_f1 > best_f1:
            best_f1 = val_metrics.micro_f1
            best_params = {p.name: p.data.copy() for p in model.parameters()}
    if best_params is not None:
        for p in model.parameters():
            p.data[...] = best_params[p.name]
    return model, history


def tiny_model_gradient_check(seed: int = 0):
    """Finite-difference check of the full labeled+unlabeled objective on a
    tiny double-precision model; returns the worst relative error."""
    from .corpus import generate_synthetic_corpus, synthetic_schema
    from .gradcheck import check_gradients

    config = ModelConfig(
        n_classes=2, word_dim=8, pos_dim=2, max_dist=4,
        classifier_windows=(2, 3), classifier_filters=3,
        encoder_hidden=8, latent_dim=4,
        decoder_channels=(4, 4, 4), decoder_window=3, dropout=0.5,
    )
    rng = SeededRng(seed)
    insts = generate_synthetic_corpus(2, 8, 12, 1.0, (5, 9), rng.fork("corpus"))
    vocab_tokens = []
    for inst in insts:
        vocab_tokens.extend(inst.tokens)
    vocab = Vocab(sorted(set(t for t in vocab_tokens if t not in ("E0", "E1")))[:16])
    schema = synthetic_schema(2)
    model = SemiVAE(config, vocab, schema, rng.fork("model"), dtype=np.float64)
    labeled = assemble_batch(insts[:2], vocab, config, require_labels=True)
    unlabeled = assemble_batch(insts[2:4], vocab, config, require_labels=False)

    def build_loss():
        loss_rng = SeededRng(seed + 1)
        lab, _ = labeled_loss_batch(model, labeled, loss_rng.fork("lab"),
                                    training=True, alpha=1.0)
        unl, _ = unlabeled_loss_batch(model, unlabeled, loss_rng.fork("unl"),
                                      training=True)
        return add(lab, unl)

    return check_gradients(build_loss, model.parameters())
