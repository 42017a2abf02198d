"""Checkpoint round-trips and failure modes."""

import json
import struct

import numpy as np
import pytest

from relvae.checkpoint import (
    MAGIC,
    CheckpointCorruptError,
    CheckpointShapeError,
    CheckpointVersionError,
    load_checkpoint,
    read_header,
    save_checkpoint,
)
from relvae.corpus import build_vocab, generate_synthetic_corpus, synthetic_schema
from relvae.networks import ModelConfig
from relvae.rng import SeededRng
from relvae.semivae import SemiVAE, predict

CONFIG = ModelConfig(
    n_classes=3, word_dim=8, pos_dim=2, max_dist=4,
    classifier_windows=(2, 3), classifier_filters=3,
    encoder_hidden=6, latent_dim=4,
    decoder_channels=(4, 4, 4), decoder_window=3, dropout=0.5,
)


@pytest.fixture
def model_and_instances():
    rng = SeededRng(11)
    insts = generate_synthetic_corpus(3, 100, 12, 1.0, (6, 12), rng.fork("corpus"))
    vocab = build_vocab(insts)
    model = SemiVAE(CONFIG, vocab, synthetic_schema(3), rng.fork("model"))
    return model, insts


def test_round_trip_is_bit_identical(model_and_instances, tmp_path):
    model, _ = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    assert loaded.vocab.all_tokens() == model.vocab.all_tokens()
    assert loaded.schema.names == model.schema.names
    assert loaded.schema.negative_index == model.schema.negative_index
    originals = model.parameter_dict()
    for p in loaded.parameters():
        assert np.array_equal(p.data, originals[p.name].data), p.name


def test_loaded_model_predicts_identically(model_and_instances, tmp_path):
    model, insts = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert predict(loaded, insts) == predict(model, insts)


def test_extra_metadata_survives(model_and_instances, tmp_path):
    model, _ = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path, extra={"val_f1": 0.75, "epochs": 5})
    assert read_header(path)["extra"] == {"val_f1": 0.75, "epochs": 5}


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "bogus.rvae"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointCorruptError, match="not a model checkpoint"):
        load_checkpoint(path)


def test_future_version_rejected(model_and_instances, tmp_path):
    model, _ = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointVersionError, match="version 9"):
        load_checkpoint(path)


def test_truncated_payload_rejected(model_and_instances, tmp_path):
    model, _ = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-20])
    with pytest.raises(CheckpointCorruptError, match="payload"):
        load_checkpoint(path)


def test_trailing_garbage_rejected(model_and_instances, tmp_path):
    model, _ = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path)
    path.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(CheckpointCorruptError, match="payload"):
        load_checkpoint(path)


def _rewrite_header(path, mutate):
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    mutate(header)
    blob = json.dumps(header).encode("utf-8")
    path.write_bytes(raw[:8] + struct.pack("<Q", len(blob)) + blob + raw[16 + hlen:])


def test_edited_shape_names_parameter(model_and_instances, tmp_path):
    model, _ = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path)

    def mutate(header):
        # transpose the recorded shape: same byte budget, wrong layout,
        # so the per-parameter shape check is what fires
        entry = next(e for e in header["manifest"] if e["name"] == "cls.out.W")
        entry["shape"] = entry["shape"][::-1]

    _rewrite_header(path, mutate)
    with pytest.raises(CheckpointShapeError, match="cls.out.W"):
        load_checkpoint(path)


def test_missing_header_key_rejected(model_and_instances, tmp_path):
    model, _ = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path)
    _rewrite_header(path, lambda header: header.pop("schema"))
    with pytest.raises(CheckpointCorruptError, match="schema"):
        load_checkpoint(path)


def test_unparseable_header_rejected(model_and_instances, tmp_path):
    model, _ = model_and_instances
    path = tmp_path / "model.rvae"
    save_checkpoint(model, path)
    raw = bytearray(path.read_bytes())
    raw[20] = 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointCorruptError):
        load_checkpoint(path)
