import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photonlab import dataset_io as dio
from photonlab.photon_sim import detection_probability, flux_map, get_preset


def _fixture_images():
    rng = np.random.default_rng(0)
    return rng.integers(0, 256, (2, 28, 28)).astype(np.uint8)


def _blob_images(n, seed=0):
    rng = np.random.default_rng(seed)
    imgs = np.zeros((n, 28, 28), np.uint8)
    for k in range(n):
        r, c = rng.integers(4, 14, 2)
        imgs[k, r:r + 10, c:c + 4] = rng.integers(128, 256)
        imgs[k, r:r + 3, c:c + 10] = 255
    return imgs


def test_parse_image_fixture():
    imgs = _fixture_images()
    raw = bytes([0, 0, 8, 3]) + struct.pack(">3I", 2, 28, 28) + imgs.tobytes()
    arr = dio.parse_idx(raw)
    assert arr.shape == (2, 28, 28) and arr.type_code == 8
    np.testing.assert_array_equal(arr.data, imgs)
    norm = dio.parse_idx(raw, normalize=True)
    assert norm.dtype == np.float64 and norm.max() <= 1.0
    np.testing.assert_array_equal(norm, imgs / 255.0)


def test_parse_label_fixture():
    raw = bytes([0, 0, 8, 1]) + struct.pack(">I", 2) + bytes([7, 3])
    arr = dio.parse_idx(raw)
    assert arr.shape == (2,) and arr.data.tolist() == [7, 3]


def test_parse_errors_are_distinct():
    good = bytes([0, 0, 8, 1]) + struct.pack(">I", 2) + bytes([7, 3])
    with pytest.raises(dio.IdxMagicError):
        dio.parse_idx(b"\x01" + good[1:])
    with pytest.raises(dio.IdxTruncatedError):
        dio.parse_idx(good[:-1])
    with pytest.raises(dio.IdxTruncatedError):
        dio.parse_idx(good[:3])
    with pytest.raises(dio.IdxTypeError):
        dio.parse_idx(bytes([0, 0, 0x0D, 1]) + struct.pack(">I", 1) + b"\x00" * 4)
    assert len({dio.IdxMagicError, dio.IdxTruncatedError, dio.IdxTypeError}) == 3


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 3), st.integers(0, 255))
def test_every_magic_mutation_rejected(pos, value):
    imgs = _fixture_images()
    raw = bytearray(bytes([0, 0, 8, 3]) + struct.pack(">3I", 2, 28, 28) + imgs.tobytes())
    if raw[pos] == value:
        return
    raw[pos] = value
    with pytest.raises(dio.IdxError):
        dio.parse_idx(bytes(raw))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(0, 2**32 - 1))
def test_serialize_round_trip(shape, seed):
    data = np.random.default_rng(seed).integers(0, 256, shape).astype(np.uint8)
    arr = dio.parse_idx(dio.serialize_idx(data))
    assert arr.shape == tuple(shape)
    np.testing.assert_array_equal(arr.data, data)
    assert dio.serialize_idx(arr) == dio.serialize_idx(data)


def test_read_idx_file_and_gzip(tmp_path):
    import gzip
    imgs = _fixture_images()
    dio.write_idx(tmp_path / "x.idx", imgs)
    (tmp_path / "x.idx.gz").write_bytes(gzip.compress((tmp_path / "x.idx").read_bytes()))
    np.testing.assert_array_equal(dio.read_idx(tmp_path / "x.idx").data, imgs)
    np.testing.assert_array_equal(dio.read_idx(tmp_path / "x.idx.gz").data, imgs)
    (tmp_path / "bad.idx").write_bytes(b"\x00\x00\x08\x01\x00\x00\x00\x05ab")
    with pytest.raises(dio.IdxTruncatedError, match="bad.idx"):
        dio.read_idx(tmp_path / "bad.idx")


# -- splits --------------------------------------------------------------------

@pytest.mark.parametrize("counts", [(10521, 1169), (6021, 669)])
def test_split_sizes(counts):
    s = dio.make_split(sum(counts) + 100, *counts, seed=1)
    assert (len(s.train_indices), len(s.test_indices)) == counts


@pytest.mark.parametrize("seed", range(10))
def test_split_disjoint_and_deterministic(seed):
    a = dio.make_split(500, 300, 150, seed)
    b = dio.make_split(500, 300, 150, seed)
    np.testing.assert_array_equal(a.train_indices, b.train_indices)
    np.testing.assert_array_equal(a.test_indices, b.test_indices)
    assert not set(a.train_indices) & set(a.test_indices)
    assert len(set(a.train_indices)) == 300


def test_split_insufficient():
    with pytest.raises(ValueError, match="only 10"):
        dio.make_split(10, 8, 3, 0)


# -- pairs ---------------------------------------------------------------------

def test_build_save_load_regenerate(tmp_path):
    imgs = _blob_images(12) / 255.0
    pairs = dio.build_pairs(imgs, [3, 7, 1, 9], "paper-like", 42, dataset="blobs")
    assert len(pairs) == 4
    dio.save_pairs(pairs, tmp_path / "cache")
    back = dio.load_pairs(tmp_path / "cache")
    np.testing.assert_array_equal(back.frames, pairs.frames)
    np.testing.assert_array_equal(back.truths, pairs.truths)
    assert back.indices == [3, 7, 1, 9] and back.stream_seeds == pairs.stream_seeds
    np.testing.assert_array_equal(dio.regenerate_frames(back), pairs.frames)
    m = dio.read_manifest(tmp_path / "cache")
    assert m["dataset"] == "blobs" and m["camera_preset"] == "paper-like" and m["master_seed"] == 42
    assert set(m["pairs"][0]) == {"index", "frame", "truth", "stream_seed"}


def test_frame_seed_depends_on_source_index_only():
    imgs = _blob_images(6) / 255.0
    a = dio.build_pairs(imgs, [2, 4], "paper-like", 5)
    b = dio.build_pairs(imgs, [4, 2], "paper-like", 5)
    np.testing.assert_array_equal(a.frames[0], b.frames[1])


def test_rebuild_is_byte_identical(tmp_path):
    imgs = _blob_images(5) / 255.0
    for name in ("a", "b"):
        dio.save_pairs(dio.build_pairs(imgs, range(5), "paper-like", 3), tmp_path / name)
    for f in sorted((tmp_path / "a").rglob("*.*")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_ones_fraction_matches_analytic_rate():
    imgs = _blob_images(200, seed=1) / 255.0
    cam = get_preset("paper-like")
    pairs = dio.build_pairs(imgs, range(200), cam, 9)
    analytic = np.mean([detection_probability(flux_map(t, cam.mu), cam).mean() for t in imgs])
    assert abs(pairs.frames.mean() - analytic) < 0.1 * analytic


def test_unwritable_cache(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    pairs = dio.build_pairs(_blob_images(1) / 255.0, [0], "paper-like", 0)
    with pytest.raises(OSError, match="cannot create"):
        dio.save_pairs(pairs, blocker / "sub")
