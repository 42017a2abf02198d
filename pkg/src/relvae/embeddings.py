"""Word and distance embedding tables and the two network input views.

Every token in a sentence is represented by its word vector concatenated
with two distance vectors (one per entity), giving rows of width
word_dim + 2*pos_dim.  The fixed entity-surrounding window uses word
vectors only.  One distance table serves both channels; the channels
differ only by the index they look up.
"""

from __future__ import annotations

import numpy as np

from .autodiff import DEFAULT_DTYPE, Parameter, ShapeError, Tensor, concat, embedding_lookup, glorot_uniform
from .corpus import WINDOW_SIZE, Vocab, position_pad_index
from .rng import SeededRng

WORD_DIM = 200
POS_DIM = 20
MAX_DIST = 50


class EmbeddingTables:
    """Trainable lookup tables for words and entity distances.

    The PAD rows (word row 0, distance row 2*max_dist+1) are zero and
    excluded from updates so padded positions stay inert.  ``word_trainable``
    turns word-vector fine-tuning off, e.g. to freeze pretrained vectors.
    """

    def __init__(self, word: Parameter, dis: Parameter, max_dist: int,
                 word_trainable: bool = True):
        self.word = word
        self.dis = dis
        self.max_dist = max_dist
        self.word_trainable = word_trainable

    @property
    def word_dim(self) -> int:
        return self.word.data.shape[1]

    @property
    def pos_dim(self) -> int:
        return self.dis.data.shape[1]

    @property
    def sentence_dim(self) -> int:
        return self.word_dim + 2 * self.pos_dim

    def parameters(self):
        return ([self.word] if self.word_trainable else []) + [self.dis]


def init_tables(vocab: Vocab, rng: SeededRng, word_dim: int = WORD_DIM,
                pos_dim: int = POS_DIM, max_dist: int = MAX_DIST,
                dtype=DEFAULT_DTYPE) -> EmbeddingTables:
    """Fresh tables: word rows Glorot-uniform, distance rows standard
    normal, PAD rows zeroed and pinned."""
    word = glorot_uniform((len(vocab), word_dim), rng.fork("word"), dtype=dtype)
    word[Vocab.PAD] = 0.0
    pad_dis = position_pad_index(max_dist)
    dis = rng.fork("dis").normal((pad_dis + 1, pos_dim), dtype=dtype)
    dis[pad_dis] = 0.0
    return EmbeddingTables(
        word=Parameter("emb.word", word, frozen_rows=(Vocab.PAD,)),
        dis=Parameter("emb.dis", dis, frozen_rows=(pad_dis,)),
        max_dist=max_dist,
    )


def load_pretrained(path, vocab: Vocab, rng: SeededRng, word_dim: int = WORD_DIM,
                    pos_dim: int = POS_DIM, max_dist: int = MAX_DIST,
                    dtype=DEFAULT_DTYPE) -> EmbeddingTables:
    """Overlay vectors from a text file (optional ``count dim`` header, then
    ``token v1 .. vD`` per line) onto freshly initialized tables; vocab
    tokens missing from the file keep their random rows."""
    tables = init_tables(vocab, rng, word_dim, pos_dim, max_dist, dtype)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split(" ")
            if lineno == 1 and len(parts) == 2:
                continue   # header: vector count and dimensionality
            if len(parts) < 2 or not parts[0]:
                raise ValueError(f"{path}, line {lineno}: not a token-vector line")
            token, values = parts[0], parts[1:]
            if len(values) != word_dim:
                raise ValueError(
                    f"{path}, line {lineno}: file has {len(values)}-dim vectors "
                    f"but the configured word dimension is {word_dim}"
                )
            if token not in vocab:
                continue
            idx = vocab.id(token)
            if idx == Vocab.PAD:
                continue   # PAD row stays zero
            try:
                tables.word.data[idx] = np.array([float(v) for v in values], dtype=dtype)
            except ValueError:
                raise ValueError(
                    f"{path}, line {lineno}: vector entries are not all numeric"
                ) from None
    return tables


def embed_sentence(token_indices, dist0, dist1, tables: EmbeddingTables) -> Tensor:
    """Per-token representation: word vector with the two entity-distance
    vectors appended, one row per token (m x (word_dim + 2*pos_dim))."""
    tok = np.asarray(token_indices, dtype=np.int64)
    d0 = np.asarray(dist0, dtype=np.int64)
    d1 = np.asarray(dist1, dtype=np.int64)
    if not tok.shape == d0.shape == d1.shape:
        raise ShapeError(
            f"tokens {tok.shape}, dist0 {d0.shape}, dist1 {d1.shape} must agree"
        )
    return concat(
        [
            embedding_lookup(tables.word, tok),
            embedding_lookup(tables.dis, d0),
            embedding_lookup(tables.dis, d1),
        ],
        axis=-1,
    )


def embed_window(window_indices, tables: EmbeddingTables) -> Tensor:
    """Word vectors for the fixed-size entity-surrounding window."""
    idx = np.asarray(window_indices, dtype=np.int64)
    if idx.shape[-1] != WINDOW_SIZE:
        raise ShapeError(f"window length {idx.shape[-1]} != {WINDOW_SIZE}")
    return embedding_lookup(tables.word, idx)
