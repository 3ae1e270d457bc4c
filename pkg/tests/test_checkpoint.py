"""Tests for model checkpoints."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from rave.codec.bitstream import (
    FLAG_CHECKPOINT,
    DecodedStream,
    encode_subset,
    write_container,
)
from rave.codec.checkpoint import (
    TAG_SCORES,
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_artifact,
    round_to_f32,
)
from rave.codec.quant import fit_spec
from rave.exceptions import CorruptPayloadError
from rave.hierarchy import hierarchy_from_ranking
from rave.importance import ScoreTable
from rave.models.hierarchy import LevelSpec
from rave.rate_control import RateTable


def _raw_checkpoint(planes: bytes, *sections: bytes, count: int = 1) -> bytes:
    return write_container(
        flags=FLAG_CHECKPOINT,
        canvas_width=4,
        canvas_height=4,
        gaussian_count=count,
        anchor_level=0,
        planes=[(32, 0.0, 0.0)] * 10,
        raw_payload=planes + b"".join(sections),
        backend=None,
    )


def test_should_restore_model_and_rate_state(make_gaussians) -> None:
    # Arrange
    gaussians = make_gaussians(12, 16, 16, seed=2)
    hierarchy = hierarchy_from_ranking(
        np.random.default_rng(0).permutation(12), LevelSpec.uniform(3), 12
    )
    scores = ScoreTable.from_mapping({int(i): 0.5 * k for k, i in enumerate([8, 9])})
    hierarchy.store_scores(3, "global", scores)
    table = RateTable(counts=(4, 8, 12), rates=(300, 450, 610))
    spec = fit_spec(gaussians)

    # Act
    restored = decode_checkpoint(
        encode_checkpoint(
            Checkpoint(
                gaussians=gaussians,
                hierarchy=hierarchy,
                rate_table=table,
                quant_spec=spec,
            )
        )
    )

    # Assert
    expected = round_to_f32(gaussians)
    for got, want in zip(restored.gaussians.planes(), expected.planes()):
        np.testing.assert_array_equal(got, want)
    assert restored.hierarchy.fractions == hierarchy.fractions
    for got, want in zip(restored.hierarchy.contexts, hierarchy.contexts):
        np.testing.assert_array_equal(got, want)
    cached = restored.hierarchy.cached_scores()
    assert list(cached) == [(3, "global")]
    assert cached[(3, "global")].as_dict() == scores.as_dict()
    assert restored.rate_table == table
    assert restored.quant_spec == spec


def test_should_leave_optional_state_empty_when_model_is_bare(make_gaussians) -> None:
    gaussians = round_to_f32(make_gaussians(5))

    restored = decode_checkpoint(encode_checkpoint(Checkpoint(gaussians=gaussians)))

    assert restored.hierarchy is None
    assert restored.rate_table is None
    assert restored.quant_spec is None
    assert restored.gaussians.fingerprint() == gaussians.fingerprint()


def test_should_store_uncompressed_when_backend_is_none(make_gaussians) -> None:
    gaussians = round_to_f32(make_gaussians(3))

    data = encode_checkpoint(Checkpoint(gaussians=gaussians), backend=None)

    assert decode_checkpoint(data).gaussians.fingerprint() == gaussians.fingerprint()


def test_should_skip_unknown_sections() -> None:
    planes = struct.pack("<10f", *range(10))
    unknown = struct.pack("<BI", 99, 3) + b"xyz"

    restored = decode_checkpoint(_raw_checkpoint(planes, unknown))

    assert restored.gaussians.count == 1
    assert restored.gaussians.depth_key.tolist() == [9.0]


def test_should_raise_corrupt_payload_when_scores_precede_hierarchy() -> None:
    planes = struct.pack("<10f", *range(10))
    scores = struct.pack("<BI", TAG_SCORES, 2) + bytes([2, 0])

    with pytest.raises(CorruptPayloadError):
        decode_checkpoint(_raw_checkpoint(planes, scores))


def test_should_raise_corrupt_payload_when_section_is_cut() -> None:
    planes = struct.pack("<10f", *range(10))
    cut = struct.pack("<BI", 3, 40) + b"\x01"

    with pytest.raises(CorruptPayloadError):
        decode_checkpoint(_raw_checkpoint(planes, cut))


def test_should_raise_corrupt_payload_when_stored_hierarchy_is_invalid() -> None:
    planes = struct.pack("<10f", *range(10)) * 2
    # two levels claiming the same Gaussian
    body = struct.pack("<B2d", 2, 0.5, 1.0) + struct.pack("<II", 1, 0) * 2
    section = struct.pack("<BI", 1, len(body)) + body

    with pytest.raises(CorruptPayloadError):
        decode_checkpoint(_raw_checkpoint(planes, section, count=2))


def test_should_raise_corrupt_payload_when_bitstream_is_opened_as_checkpoint(
    make_gaussians,
) -> None:
    with pytest.raises(CorruptPayloadError):
        decode_checkpoint(encode_subset(make_gaussians(4), range(4)))


def test_should_open_either_artifact_kind(make_gaussians) -> None:
    gaussians = round_to_f32(make_gaussians(6))

    checkpoint = load_artifact(encode_checkpoint(Checkpoint(gaussians=gaussians)))
    stream = load_artifact(encode_subset(gaussians, [0, 1, 2]))

    assert isinstance(checkpoint, Checkpoint)
    assert isinstance(stream, DecodedStream)
    assert stream.gaussians.count == 3


def test_should_be_idempotent_when_rounding_to_float32(make_gaussians) -> None:
    once = round_to_f32(make_gaussians(10, seed=4))

    twice = round_to_f32(once)

    assert once.fingerprint() == twice.fingerprint()
