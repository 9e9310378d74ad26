import struct

import numpy as np
import pytest

from reasonmix.errors import (
    ArchiveFormatError,
    ArchiveIntegrityError,
    ShapeMismatchError,
    ValidationError,
    ZeroNormError,
)
from reasonmix.tensors import (
    NamedTensorArchive,
    archive_digest,
    archives_equal,
    cosine_similarity,
    deserialize_archive,
    l2_distance,
    load_archive,
    save_archive,
    serialize_archive,
)


def test_round_trip_identity(tmp_path):
    archive = NamedTensorArchive({"w": np.array([[1.0, 2.0], [3.0, 4.0]])})
    path = tmp_path / "a.bin"
    save_archive(archive, path)
    loaded = load_archive(path)
    assert loaded.names() == ["w"]
    np.testing.assert_array_equal(loaded["w"], archive["w"])
    assert archives_equal(archive, loaded)


def test_empty_archive_is_valid(tmp_path):
    archive = NamedTensorArchive({})
    path = tmp_path / "empty.bin"
    save_archive(archive, path)
    assert len(load_archive(path)) == 0


def test_metadata_round_trip(tmp_path):
    archive = NamedTensorArchive({"x": np.zeros(3)}, {"provenance": "unit-test"})
    path = tmp_path / "m.bin"
    save_archive(archive, path)
    assert load_archive(path).metadata == {"provenance": "unit-test"}


def test_serialization_is_deterministic():
    entries = {"b": np.arange(4.0), "a": np.ones((2, 3))}
    blob1 = serialize_archive(NamedTensorArchive(entries, {"k": "v"}))
    blob2 = serialize_archive(NamedTensorArchive(entries, {"k": "v"}))
    assert blob1 == blob2


def test_names_stored_lexicographically():
    archive = NamedTensorArchive({"zz": np.zeros(1), "aa": np.zeros(1), "mm": np.zeros(1)})
    assert archive.names() == ["aa", "mm", "zz"]


def test_declared_header_length_exceeding_file_is_format_error():
    blob = serialize_archive(NamedTensorArchive({"w": np.ones(4)}))
    truncated = blob[:10]
    with pytest.raises(ArchiveFormatError):
        deserialize_archive(truncated)


def test_truncated_payload_is_integrity_error():
    # oracle: serialize a full file, then cut bytes off the tensor payload
    blob = serialize_archive(NamedTensorArchive({"w": np.ones(8)}))
    with pytest.raises(ArchiveIntegrityError):
        deserialize_archive(blob[:-4])


def test_offset_span_mismatch_is_integrity_error():
    header = b'{"w":{"dtype":"F64","shape":[4],"data_offsets":[0,16]}}'
    blob = struct.pack("<Q", len(header)) + header + b"\0" * 16
    with pytest.raises(ArchiveIntegrityError):
        deserialize_archive(blob)


def test_bad_json_header_reports_offset():
    header = b"{not json"
    blob = struct.pack("<Q", len(header)) + header
    with pytest.raises(ArchiveFormatError) as exc_info:
        deserialize_archive(blob)
    assert exc_info.value.byte_offset == 8


def test_unknown_dtype_tag_rejected():
    header = b'{"w":{"dtype":"I8","shape":[1],"data_offsets":[0,1]}}'
    blob = struct.pack("<Q", len(header)) + header + b"\0"
    with pytest.raises(ArchiveFormatError):
        deserialize_archive(blob)


def test_non_finite_tensor_rejected():
    with pytest.raises(ValidationError):
        NamedTensorArchive({"w": np.array([1.0, np.nan])})
    with pytest.raises(ValidationError):
        NamedTensorArchive({"w": np.array([np.inf])})


def test_mixed_dtypes_rejected():
    with pytest.raises(ValidationError):
        NamedTensorArchive(
            {"a": np.zeros(2, dtype=np.float32), "b": np.zeros(2, dtype=np.float64)}
        )


def test_float32_preserved(tmp_path):
    archive = NamedTensorArchive({"w": np.linspace(0, 1, 7, dtype=np.float32)})
    path = tmp_path / "f32.bin"
    save_archive(archive, path)
    loaded = load_archive(path)
    assert loaded["w"].dtype == np.float32
    np.testing.assert_array_equal(loaded["w"], archive["w"])


def test_digest_changes_with_content():
    a = NamedTensorArchive({"w": np.ones(3)})
    b = NamedTensorArchive({"w": np.ones(3) * 2})
    assert archive_digest(a) != archive_digest(b)
    assert archive_digest(a) == archive_digest(NamedTensorArchive({"w": np.ones(3)}))


def test_cosine_identity_antisymmetry_orthogonality():
    a = np.array([1.0, 2.0, -3.0])
    assert cosine_similarity(a, a) == pytest.approx(1.0)
    assert cosine_similarity(a, -a) == pytest.approx(-1.0)
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_zero_norm_error():
    with pytest.raises(ZeroNormError):
        cosine_similarity(np.zeros(3), np.ones(3))


def test_cosine_scale_invariance():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.normal(size=6), rng.normal(size=6)
        alpha = float(rng.uniform(0.1, 50.0))
        assert cosine_similarity(alpha * a, b) == pytest.approx(
            cosine_similarity(a, b), abs=1e-12
        )


def test_l2_basics():
    assert l2_distance(np.ones(4), np.ones(4)) == 0.0
    assert l2_distance(np.array([3.0, 0.0]), np.array([0.0, 4.0])) == pytest.approx(5.0)
    with pytest.raises(ShapeMismatchError):
        l2_distance(np.ones(3), np.ones(4))


def test_l2_matches_naive_scalar_loop_oracle():
    rng = np.random.default_rng(8)
    for _ in range(10):
        a = rng.normal(size=50)
        b = rng.normal(size=50)
        naive = 0.0
        for x, y in zip(a, b):  # independent summation oracle
            naive += (x - y) ** 2
        naive = naive**0.5
        assert l2_distance(a, b) == pytest.approx(naive, rel=1e-12)


def test_l2_triangle_inequality():
    rng = np.random.default_rng(4)
    for _ in range(25):
        a, b, c = rng.normal(size=(3, 12))
        assert l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-12
