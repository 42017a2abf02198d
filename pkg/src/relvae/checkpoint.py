"""Model serialization.

File layout, all integers little-endian:

    bytes 0-3   magic ``RVAE``
    bytes 4-7   format version (uint32)
    bytes 8-15  header length in bytes (uint64)
    header      UTF-8 JSON: model config, vocabulary, label schema and a
                parameter manifest (name + shape, in payload order)
    payload     the parameters as raw float32 arrays, concatenated in
                manifest order

Loading rebuilds the model and fails loudly: a wrong version raises
CheckpointVersionError, damaged bytes raise CheckpointCorruptError, and a
manifest entry that does not match the rebuilt parameter raises
CheckpointShapeError naming the parameter.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .corpus import RESERVED_TOKENS, LabelSchema, Vocab
from .networks import ModelConfig
from .rng import SeededRng
from .semivae import SemiVAE

MAGIC = b"RVAE"
VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def save_checkpoint(model: SemiVAE, path, extra: dict = None) -> None:
    """Write the model to ``path``; ``extra`` is stored verbatim in the
    header (training provenance, scores and the like)."""
    params = model.parameters()
    header = {
        "config": dataclasses.asdict(model.config),
        "tokens": list(model.vocab.all_tokens()[len(RESERVED_TOKENS):]),
        "schema": {"names": list(model.schema.names),
                   "negative_index": model.schema.negative_index},
        "manifest": [{"name": p.name, "shape": list(p.data.shape)} for p in params],
        "extra": extra or {},
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def read_header(path) -> dict:
    """Parse and validate the header; raises on anything malformed."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointCorruptError(f"{path}: not a model checkpoint")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, this build reads {VERSION}")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + hlen:
        raise CheckpointCorruptError(f"{path}: header truncated")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"{path}: header unreadable: {exc}") from exc
    for key in ("config", "tokens", "schema", "manifest"):
        if key not in header:
            raise CheckpointCorruptError(f"{path}: header lacks {key!r}")
    header["_payload_offset"] = 16 + hlen
    return header


def load_checkpoint(path) -> SemiVAE:
    """Rebuild the model saved at ``path``."""
    header = read_header(path)
    raw = Path(path).read_bytes()
    config = ModelConfig(**header["config"])
    vocab = Vocab(header["tokens"])
    schema = LabelSchema(tuple(header["schema"]["names"]),
                         int(header["schema"]["negative_index"]))
    model = SemiVAE(config, vocab, schema, SeededRng(0))

    params = model.parameter_dict()
    manifest = header["manifest"]
    names = [entry["name"] for entry in manifest]
    if sorted(names) != sorted(params):
        raise CheckpointShapeError(
            f"{path}: manifest lists {len(names)} parameters, "
            f"model has {len(params)}")

    offset = header["_payload_offset"]
    payload = raw[offset:]
    need = sum(int(np.prod(entry["shape"])) for entry in manifest) * 4
    if len(payload) != need:
        raise CheckpointCorruptError(
            f"{path}: payload holds {len(payload)} bytes, manifest needs {need}")

    pos = 0
    for entry in manifest:
        p = params[entry["name"]]
        shape = tuple(entry["shape"])
        if shape != p.data.shape:
            raise CheckpointShapeError(
                f"{path}: parameter {entry['name']} has shape {shape} "
                f"on disk, {p.data.shape} in the model")
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=pos)
        p.data[...] = arr.reshape(shape)
        pos += count * 4
    return model
