"""Tests for the RAVS bitstream container."""

from __future__ import annotations

import struct
import zlib

import numpy as np
import pytest

from rave.codec.backends import BACKENDS, get_backend
from rave.codec.bitstream import (
    ANCHOR_INTERPOLATED,
    FLAG_CHECKPOINT,
    HEADER_SIZE,
    RateMeter,
    decode,
    encode_subset,
    measure_rate,
    pack_codes,
    read_container,
    unpack_codes,
    write_container,
)
from rave.codec.quant import fit_spec, quantize_set
from rave.exceptions import (
    BadMagicError,
    CorruptPayloadError,
    CrcMismatchError,
    EmptySelectionError,
    InvalidConfigError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from rave.models.quant import PLANE_NAMES, QuantPlane, QuantSpec
from rave.splat.gaussians import GaussianSet

NIBBLE = QuantPlane(bits=4, min=0.0, max=15.0)


def _nibble_scene() -> GaussianSet:
    planes = [
        [1, 2],
        [3, 4],
        [5, 6],
        [7, 8],
        [9, 10],
        [11, 12],
        [13, 14],
        [15, 0],
        [1, 1],
        [2, 3],
    ]
    return GaussianSet.from_planes([np.array(p, float) for p in planes], 16, 8)


def _nibble_spec() -> QuantSpec:
    return QuantSpec(planes={name: NIBBLE for name in PLANE_NAMES})


def _golden_stream() -> bytes:
    header = struct.pack("<4sHHIIIBB", b"RAVS", 1, 0, 16, 8, 2, 3, 10)
    header += struct.pack("<Bff", 4, 0.0, 15.0) * 10
    header += struct.pack("<QQ", 10, 10)
    header += struct.pack("<I", zlib.crc32(header))
    return header + bytes.fromhex("123456789abcdef01123")


def test_should_write_golden_bytes_when_payload_is_uncompressed() -> None:
    # Act
    stream = encode_subset(
        _nibble_scene(), [0, 1], _nibble_spec(), anchor_level=3, backend=None
    )

    # Assert
    assert len(stream) == HEADER_SIZE + 10
    assert stream == _golden_stream()


def test_should_decode_golden_bytes() -> None:
    decoded = decode(_golden_stream())

    assert decoded.anchor_level == 3
    assert decoded.backend is None
    assert decoded.gaussians.canvas_width == 16
    assert decoded.gaussians.canvas_height == 8
    np.testing.assert_allclose(decoded.gaussians.pos, [[1, 3], [2, 4]])
    np.testing.assert_allclose(decoded.gaussians.color, [[13, 15, 1], [14, 0, 1]])


def test_should_pack_codes_msb_first_and_pad_to_byte() -> None:
    packed = pack_codes(np.array([5, 3, 7], dtype=np.uint16), 3)

    assert packed == bytes([0b10101111, 0b10000000])
    assert unpack_codes(packed, 3, 3).tolist() == [5, 3, 7]


@pytest.mark.parametrize("backend", ["lzma", "zlib", "bz2", None])
def test_should_decode_quantized_subset_for_every_backend(
    make_gaussians, backend
) -> None:
    # Arrange
    gaussians = make_gaussians(40, 16, 16, seed=3)
    indices = [30, 2, 17, 5, 9]
    subset = gaussians.take(indices)
    spec = fit_spec(subset)

    # Act
    stream = encode_subset(
        gaussians,
        indices,
        backend=get_backend(backend) if backend else None,
    )
    decoded = decode(stream)

    # Assert
    expected = quantize_set(subset, spec)
    for got, want in zip(decoded.gaussians.planes(), expected.planes()):
        np.testing.assert_array_equal(got, want)
    assert decoded.interpolated
    assert decoded.anchor_level == ANCHOR_INTERPOLATED
    assert decoded.backend == backend
    assert decoded.quant_spec == spec


def test_should_keep_pinned_grid_when_spec_is_given(make_gaussians) -> None:
    gaussians = make_gaussians(20, 16, 16, seed=5)
    spec = fit_spec(gaussians)

    decoded = decode(encode_subset(gaussians, [1, 4], spec))

    assert decoded.quant_spec == spec


def test_should_encode_deterministically(make_gaussians) -> None:
    gaussians = make_gaussians(25, 16, 16, seed=6)

    assert encode_subset(gaussians, range(25)) == encode_subset(gaussians, range(25))


def test_should_compress_well_when_gaussians_are_identical(make_gaussians) -> None:
    diverse = make_gaussians(10, 16, 16)
    copies = GaussianSet.from_gaussians([diverse.gaussian(0)] * 1000, 16, 16)

    header, _ = read_container(encode_subset(copies, range(1000), fit_spec(diverse)))

    assert header.payload_compressed_len < 0.1 * header.payload_raw_len


def test_should_raise_empty_selection_when_nothing_is_encoded(make_gaussians) -> None:
    with pytest.raises(EmptySelectionError):
        encode_subset(make_gaussians(3), [])
    with pytest.raises(EmptySelectionError):
        measure_rate(make_gaussians(3), [])


def test_should_raise_crc_mismatch_when_header_byte_is_corrupt() -> None:
    stream = bytearray(_golden_stream())
    stream[10] ^= 0xFF

    with pytest.raises(CrcMismatchError):
        decode(bytes(stream))


def test_should_raise_bad_magic_when_magic_differs() -> None:
    with pytest.raises(BadMagicError):
        decode(b"RAVX" + _golden_stream()[4:])


def test_should_raise_unsupported_version_when_version_is_unknown() -> None:
    stream = bytearray(_golden_stream())
    stream[4:6] = struct.pack("<H", 2)

    with pytest.raises(UnsupportedVersionError):
        decode(bytes(stream))


@pytest.mark.parametrize("cut", [2, 40, HEADER_SIZE + 9])
def test_should_raise_truncated_when_stream_is_cut(cut) -> None:
    with pytest.raises(TruncatedPayloadError):
        decode(_golden_stream()[:cut])


def test_should_raise_corrupt_payload_when_compressed_bytes_are_damaged(
    make_gaussians,
) -> None:
    stream = bytearray(
        encode_subset(make_gaussians(8), range(8), backend=BACKENDS["zlib"])
    )
    stream[-1] ^= 0xFF

    with pytest.raises(CorruptPayloadError):
        decode(bytes(stream))


def test_should_raise_corrupt_payload_when_header_plane_has_too_many_bits() -> None:
    # Arrange
    header = struct.pack("<4sHHIIIBB", b"RAVS", 1, 0, 16, 8, 2, 3, 10)
    header += struct.pack("<Bff", 17, 0.0, 15.0)
    header += struct.pack("<Bff", 4, 0.0, 15.0) * 9
    header += struct.pack("<QQ", 10, 10)
    header += struct.pack("<I", zlib.crc32(header))
    stream = header + bytes.fromhex("123456789abcdef01123")

    # Act / Assert
    with pytest.raises(CorruptPayloadError):
        decode(stream)


def test_should_raise_corrupt_payload_when_stream_is_a_checkpoint() -> None:
    stream = write_container(
        flags=FLAG_CHECKPOINT,
        canvas_width=4,
        canvas_height=4,
        gaussian_count=0,
        anchor_level=0,
        planes=[(32, 0.0, 0.0)] * 10,
        raw_payload=b"",
        backend=None,
    )

    with pytest.raises(CorruptPayloadError):
        decode(stream)


def test_should_raise_invalid_config_when_backend_is_unknown() -> None:
    with pytest.raises(InvalidConfigError):
        get_backend("brotli")


def test_should_measure_bitstream_length(make_gaussians) -> None:
    gaussians = make_gaussians(30, 16, 16, seed=7)

    rate = measure_rate(gaussians, range(0, 30, 2))

    assert rate == len(encode_subset(gaussians, range(0, 30, 2)))


def test_should_memoize_rates_when_request_repeats(make_gaussians) -> None:
    gaussians = make_gaussians(30, 16, 16, seed=8)
    meter = RateMeter()

    first = meter.measure(gaussians, [4, 1, 9])
    second = meter.measure(gaussians, np.array([1, 4, 9]))

    assert first == second == measure_rate(gaussians, [1, 4, 9])
    assert (meter.hits, meter.misses) == (1, 1)


def test_should_grow_rate_with_nested_subsets(make_gaussians) -> None:
    gaussians = make_gaussians(200, 64, 64, seed=9)
    spec = fit_spec(gaussians)

    rates = [measure_rate(gaussians, range(size), spec) for size in (40, 80, 120, 200)]

    assert rates == sorted(rates)
    assert len(set(rates)) == 4
