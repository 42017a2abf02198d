"""Relation-annotated sentence handling.

An instance is one sentence with two marked entities and (optionally) a
relation label.  This module parses and serializes the TSV instance format,
blinds entity mentions to the placeholders E0/E1, derives the per-token
distance features and the fixed 30-token entity-surrounding window, builds
vocabularies and train/validation/test splits, and generates a synthetic
trigger-word corpus for controlled experiments.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .rng import SeededRng

E0_TOKEN = "E0"
E1_TOKEN = "E1"
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, E0_TOKEN, E1_TOKEN)

# entity-surrounding window: tokens taken before/after each placeholder
WINDOW_BEFORE_E0 = 10
WINDOW_AFTER_E0 = 5
WINDOW_BEFORE_E1 = 5
WINDOW_AFTER_E1 = 10
WINDOW_SIZE = WINDOW_BEFORE_E0 + WINDOW_AFTER_E0 + WINDOW_BEFORE_E1 + WINDOW_AFTER_E1

MAX_SENTENCE_LEN = 100
UNLABELED_SENTINEL = "-"


class CorpusFormatError(ValueError):
    """Raised for malformed instance files; message carries the line number."""


@dataclasses.dataclass(frozen=True)
class RelationInstance:
    """One sentence with blinded entities and an optional label index."""

    uid: str
    tokens: tuple
    e0_index: int
    e1_index: int
    label: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.e0_index < self.e1_index < len(self.tokens):
            raise ValueError(
                f"instance {self.uid}: entity indices ({self.e0_index}, {self.e1_index}) "
                f"do not satisfy 0 <= e0 < e1 < {len(self.tokens)}"
            )
        if self.tokens[self.e0_index] != E0_TOKEN or self.tokens[self.e1_index] != E1_TOKEN:
            raise ValueError(f"instance {self.uid}: entity indices do not point at placeholders")


class LabelSchema:
    """Ordered relation class names with one designated negative class."""

    def __init__(self, names: Sequence[str], negative_index: int):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError("duplicate class names")
        if not 0 <= negative_index < len(names):
            raise ValueError(f"negative_index {negative_index} out of range for {len(names)} classes")
        self.names = names
        self.negative_index = negative_index
        self._index = {n: i for i, n in enumerate(names)}

    @classmethod
    def from_names(cls, names, negative: Optional[str] = None) -> "LabelSchema":
        names = tuple(names)
        if negative is None:
            if "Negative" not in names:
                raise ValueError(
                    "no negative class: pass negative=<name> or include a class named 'Negative'"
                )
            negative = "Negative"
        if negative not in names:
            raise ValueError(f"negative class {negative!r} not among {names}")
        return cls(names, names.index(negative))

    @classmethod
    def from_file(cls, path) -> "LabelSchema":
        negative = None
        names = []
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("negative=") and not names:
                negative = line[len("negative="):].strip()
                continue
            names.append(line)
        return cls.from_names(names, negative)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown label {name!r}; schema classes are {list(self.names)}") from None

    def name(self, index: int) -> str:
        return self.names[index]

    def positive_indices(self) -> tuple:
        return tuple(i for i in range(len(self.names)) if i != self.negative_index)

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return (
            isinstance(other, LabelSchema)
            and self.names == other.names
            and self.negative_index == other.negative_index
        )

    def __repr__(self):
        return f"LabelSchema({self.names!r}, negative_index={self.negative_index})"


class Vocab:
    """Token-to-index map with fixed reserved slots.

    Index 0 is padding, 1 the unknown-token bucket, 2 and 3 the entity
    placeholders; lookups of unindexed tokens fall back to UNK.
    """

    PAD = 0
    UNK = 1
    E0 = 2
    E1 = 3

    def __init__(self, tokens: Sequence[str] = ()):
        self._id2tok = list(RESERVED_TOKENS)
        self._tok2id = {t: i for i, t in enumerate(self._id2tok)}
        for tok in tokens:
            if tok in self._tok2id:
                continue
            self._tok2id[tok] = len(self._id2tok)
            self._id2tok.append(tok)

    def id(self, token: str) -> int:
        return self._tok2id.get(token, self.UNK)

    def token(self, index: int) -> str:
        return self._id2tok[index]

    def __contains__(self, token):
        return token in self._tok2id

    def __len__(self):
        return len(self._id2tok)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.id(t) for t in tokens], dtype=np.int64)

    def all_tokens(self) -> tuple:
        return tuple(self._id2tok)


@dataclasses.dataclass
class DatasetSplit:
    """Disjoint partitions of a corpus; unlabeled instances carry no label."""

    labeled: list
    unlabeled: list
    validation: list
    test: list

    def __post_init__(self):
        ids = [inst.uid for part in (self.labeled, self.unlabeled, self.validation, self.test)
               for inst in part]
        if len(ids) != len(set(ids)):
            raise ValueError("split partitions overlap by instance id")
        for inst in self.unlabeled:
            if inst.label is not None:
                raise ValueError(f"unlabeled partition contains a label ({inst.uid})")


def blind_entities(tokens: Sequence[str], e0_span, e1_span):
    """Collapse the two entity spans (inclusive token ranges) to single
    placeholders, the earlier span becoming E0.  Returns the new token
    list and the two placeholder indices."""
    spans = sorted([tuple(e0_span), tuple(e1_span)])
    (s0, t0), (s1, t1) = spans
    n = len(tokens)
    for start, end in spans:
        if not 0 <= start <= end < n:
            raise ValueError(f"entity span ({start}, {end}) out of bounds for {n} tokens")
    if s1 <= t0:
        raise ValueError(f"entity spans {spans[0]} and {spans[1]} overlap")
    out = list(tokens[:s0]) + [E0_TOKEN] + list(tokens[t0 + 1:s1]) + [E1_TOKEN] + list(tokens[t1 + 1:])
    e0_index = s0
    e1_index = s1 - (t0 - s0)
    return out, e0_index, e1_index


def relative_positions(instance: RelationInstance, max_dist: int = 50):
    """Per-token distances to each entity, clamped to [-max_dist, max_dist]
    and shifted by +max_dist into embedding-row indices.  Row 2*max_dist+1
    is reserved for padding positions and never produced here."""
    idx = np.arange(len(instance.tokens), dtype=np.int64)
    d0 = np.clip(idx - instance.e0_index, -max_dist, max_dist) + max_dist
    d1 = np.clip(idx - instance.e1_index, -max_dist, max_dist) + max_dist
    return d0, d1


def position_pad_index(max_dist: int = 50) -> int:
    return 2 * max_dist + 1


def _segment(ids, start, stop, pad_left):
    """ids[start:stop) clipped to bounds, padded with PAD on the outer side."""
    want = stop - start
    lo, hi = max(start, 0), min(stop, len(ids))
    body = list(ids[lo:hi]) if hi > lo else []
    pad = [Vocab.PAD] * (want - len(body))
    return pad + body if pad_left else body + pad


def surrounding_window(instance: RelationInstance, vocab: Vocab) -> np.ndarray:
    """Fixed 30-token context: 10 before E0, 5 after E0, 5 before E1,
    10 after E1 (placeholders themselves excluded, overlap between the
    inner segments permitted), each segment PAD-filled on its outer side."""
    ids = vocab.encode(instance.tokens)
    e0, e1 = instance.e0_index, instance.e1_index
    window = (
        _segment(ids, e0 - WINDOW_BEFORE_E0, e0, pad_left=True)
        + _segment(ids, e0 + 1, e0 + 1 + WINDOW_AFTER_E0, pad_left=False)
        + _segment(ids, e1 - WINDOW_BEFORE_E1, e1, pad_left=True)
        + _segment(ids, e1 + 1, e1 + 1 + WINDOW_AFTER_E1, pad_left=False)
    )
    return np.array(window, dtype=np.int64)


def build_vocab(instances, min_count: int = 1) -> Vocab:
    counts = Counter()
    for inst in instances:
        for tok in inst.tokens:
            if tok not in RESERVED_TOKENS:
                counts[tok] += 1
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(kept)


def truncate_to_cap(instance: RelationInstance, cap: int = MAX_SENTENCE_LEN) -> RelationInstance:
    """Clip long sentences to the smallest window holding both entities plus
    symmetric context; sentences within the cap pass through unchanged."""
    n = len(instance.tokens)
    if n <= cap:
        return instance
    span = instance.e1_index - instance.e0_index + 1
    if span > cap:
        raise ValueError(
            f"instance {instance.uid}: entities span {span} tokens, above the cap of {cap}"
        )
    extra = cap - span
    lo = instance.e0_index - extra // 2
    hi = instance.e1_index + (extra - extra // 2)
    if lo < 0:
        hi -= lo
        lo = 0
    if hi > n - 1:
        lo -= hi - (n - 1)
        hi = n - 1
    return dataclasses.replace(
        instance,
        tokens=instance.tokens[lo:hi + 1],
        e0_index=instance.e0_index - lo,
        e1_index=instance.e1_index - lo,
    )


def _parse_span(field: str, lineno: int):
    parts = field.split()
    if len(parts) != 2:
        raise CorpusFormatError(f"line {lineno}: span field {field!r} is not two integers")
    try:
        start, end = int(parts[0]), int(parts[1])
    except ValueError:
        raise CorpusFormatError(f"line {lineno}: span field {field!r} is not two integers") from None
    return start, end


def parse_lines(lines, schema: LabelSchema, source: str = "<memory>"):
    """Parse instance lines (see serialize_corpus for the format); comment
    lines starting with # and blank lines are skipped."""
    instances = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise CorpusFormatError(
                f"{source}, line {lineno}: expected 5 tab-separated fields, got {len(fields)}"
            )
        uid, sentence, span0, span1, label_field = fields
        tokens = sentence.split()
        if not tokens:
            raise CorpusFormatError(f"{source}, line {lineno}: empty sentence")
        e0_span = _parse_span(span0, lineno)
        e1_span = _parse_span(span1, lineno)
        if label_field == UNLABELED_SENTINEL:
            label = None
        else:
            try:
                label = schema.index(label_field)
            except KeyError as exc:
                raise CorpusFormatError(f"{source}, line {lineno}: {exc.args[0]}") from None
        try:
            blinded, e0_index, e1_index = blind_entities(tokens, e0_span, e1_span)
            inst = RelationInstance(uid, tuple(blinded), e0_index, e1_index, label)
        except ValueError as exc:
            raise CorpusFormatError(f"{source}, line {lineno}: {exc}") from None
        instances.append(inst)
    return instances


def parse_corpus(path, schema: LabelSchema):
    """Read one instance per line from a UTF-8 TSV file:
    ``id<TAB>tokens<TAB>e0_start e0_end<TAB>e1_start e1_end<TAB>label``,
    spans inclusive over the pre-blinding tokens, label ``-`` for unlabeled."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        return parse_lines(fh, schema, source=str(path))


def format_instance(instance: RelationInstance, schema: LabelSchema) -> str:
    for tok in instance.tokens:
        if not tok or any(ch.isspace() for ch in tok):
            raise ValueError(f"instance {instance.uid}: token {tok!r} is not serializable")
    label = UNLABELED_SENTINEL if instance.label is None else schema.name(instance.label)
    return "\t".join(
        [
            instance.uid,
            " ".join(instance.tokens),
            f"{instance.e0_index} {instance.e0_index}",
            f"{instance.e1_index} {instance.e1_index}",
            label,
        ]
    )


def serialize_corpus(instances, schema: LabelSchema, path=None) -> str:
    """Inverse of parse_corpus for already-blinded instances; returns the
    text and optionally writes it to ``path``."""
    text = "".join(format_instance(inst, schema) + "\n" for inst in instances)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def sample_splits(instances, labeled_count: int, val_count: int, test_count: int,
                  rng: SeededRng) -> DatasetSplit:
    """Uniform split without replacement, drawn in the order test, then
    validation, then labeled; everything left becomes the unlabeled pool
    with labels stripped."""
    total = labeled_count + val_count + test_count
    if total > len(instances):
        raise ValueError(
            f"requested {total} instances (labeled {labeled_count} + val {val_count} "
            f"+ test {test_count}) but corpus has {len(instances)}"
        )
    order = rng.permutation(len(instances))
    picked = [instances[i] for i in order]
    test = picked[:test_count]
    validation = picked[test_count:test_count + val_count]
    labeled = picked[test_count + val_count:total]
    unlabeled = [dataclasses.replace(inst, label=None) for inst in picked[total:]]
    for name, part in (("labeled", labeled), ("validation", validation), ("test", test)):
        missing = [inst.uid for inst in part if inst.label is None]
        if missing:
            raise ValueError(f"{name} split needs labels but {missing[:3]} have none")
    return DatasetSplit(labeled=labeled, unlabeled=unlabeled, validation=validation, test=test)


def _pool_stream(pool, batch_size, rng):
    """Cycle over a pool forever, reshuffling each pass; the last batch of a
    pass may be short."""
    while True:
        order = rng.permutation(len(pool))
        for start in range(0, len(pool), batch_size):
            yield [pool[i] for i in order[start:start + batch_size]]


def steps_per_epoch(split: DatasetSplit, batch_size: int) -> int:
    dominant = max(len(split.labeled), len(split.unlabeled))
    return -(-dominant // batch_size)


def batch_iterator(split: DatasetSplit, batch_size: int, rng: SeededRng):
    """Endless stream of (labeled_batch, unlabeled_batch) pairs.  The two
    pools shuffle and cycle independently; an empty unlabeled pool yields
    empty unlabeled batches.  Consume steps_per_epoch() items per epoch."""
    if not split.labeled:
        raise ValueError("labeled set is empty")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    labeled = _pool_stream(split.labeled, batch_size, rng.fork("labeled"))
    if split.unlabeled:
        unlabeled = _pool_stream(split.unlabeled, batch_size, rng.fork("unlabeled"))
        while True:
            yield next(labeled), next(unlabeled)
    else:
        while True:
            yield next(labeled), []


def synthetic_schema(n_classes: int) -> LabelSchema:
    if n_classes < 2:
        raise ValueError("need at least a negative and one positive class")
    return LabelSchema(("Negative",) + tuple(f"R{i}" for i in range(1, n_classes)), 0)


def trigger_token(class_index: int) -> str:
    return f"trig{class_index}"


def generate_synthetic_corpus(
    n_classes: int,
    n_instances: int,
    vocab_size: int,
    trigger_strength: float,
    sentence_len_range,
    rng: SeededRng,
    negative_fraction: float = 0.75,
):
    """Build a corpus where each positive class is marked by its own trigger
    token placed within three positions of an entity (inside the surrounding
    window) with probability trigger_strength.  Negative instances never
    contain a trigger, so at strength 1.0 a trigger-lookup classifier is
    exact, and at 0.0 the labels carry no signal at all."""
    lo, hi = sentence_len_range
    if lo < 4:
        raise ValueError("sentences need at least 4 tokens to place two entities")
    if not 0.0 <= trigger_strength <= 1.0:
        raise ValueError("trigger_strength must lie in [0, 1]")
    schema = synthetic_schema(n_classes)
    positives = schema.positive_indices()
    instances = []
    for i in range(n_instances):
        if rng.random() < negative_fraction or not positives:
            label = schema.negative_index
        else:
            label = positives[int(rng.integers(0, len(positives)))]
        n = int(rng.integers(lo, hi + 1))
        tokens = [f"w{int(rng.integers(0, vocab_size))}" for _ in range(n)]
        e0, e1 = sorted(rng.permutation(n)[:2])
        tokens[e0], tokens[e1] = E0_TOKEN, E1_TOKEN
        if label != schema.negative_index and rng.random() < trigger_strength:
            near = set()
            for anchor in (e0, e1):
                for off in range(-3, 4):
                    pos = anchor + off
                    if 0 <= pos < n and pos not in (e0, e1):
                        near.add(pos)
            slots = sorted(near)
            tokens[slots[int(rng.integers(0, len(slots)))]] = trigger_token(label)
        instances.append(RelationInstance(f"synth{i:05d}", tuple(tokens), int(e0), int(e1), label))
    return instances


def trigger_oracle_predict(instances, schema: LabelSchema):
    """Classify by trigger lookup: the class whose trigger token appears,
    negative otherwise.  Bayes-optimal on the synthetic corpus."""
    trigger_to_class = {trigger_token(i): i for i in schema.positive_indices()}
    preds = []
    for inst in instances:
        hit = schema.negative_index
        for tok in inst.tokens:
            if tok in trigger_to_class:
                hit = trigger_to_class[tok]
                break
        preds.append(hit)
    return preds
