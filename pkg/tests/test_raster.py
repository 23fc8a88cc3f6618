import numpy as np
import pytest

from refgame.errors import RasterFormatError
from refgame.raster import read_pgm, read_ppm, write_pgm, write_ppm


@pytest.fixture
def image():
    rng = np.random.default_rng(11)
    return rng.integers(0, 256, (13, 17, 3)).astype(np.uint8)


@pytest.fixture
def mask():
    rng = np.random.default_rng(12)
    return rng.integers(0, 7, (13, 17)).astype(np.int64)


@pytest.mark.parametrize("binary", [True, False])
def test_ppm_round_trip(tmp_path, image, binary):
    path = tmp_path / "img.ppm"
    write_ppm(path, image, binary=binary)
    assert np.array_equal(read_ppm(path), image)


@pytest.mark.parametrize("binary", [True, False])
def test_pgm_round_trip(tmp_path, mask, binary):
    path = tmp_path / "mask.pgm"
    write_pgm(path, mask, binary=binary)
    assert np.array_equal(read_pgm(path), mask)


def test_header_comments_are_skipped(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P2\n# a comment\n2 2\n# another\n255\n1 2\n3 4\n")
    assert np.array_equal(read_pgm(path), [[1, 2], [3, 4]])


def test_binary_body_starts_after_single_whitespace(tmp_path):
    path = tmp_path / "b.pgm"
    path.write_bytes(b"P5\n2 1\n255\n" + bytes([10, 32]))
    assert np.array_equal(read_pgm(path), [[10, 32]])


def test_unsupported_maxval(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P2\n1 1\n65535\n0\n")
    with pytest.raises(RasterFormatError):
        read_pgm(path)


def test_wrong_magic(tmp_path):
    path = tmp_path / "w.ppm"
    path.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(RasterFormatError):
        read_ppm(path)


def test_truncated_body(tmp_path):
    path = tmp_path / "t.ppm"
    path.write_bytes(b"P6\n2 2\n255\n\x00\x01")
    with pytest.raises(RasterFormatError):
        read_ppm(path)


def test_sample_out_of_range(tmp_path):
    path = tmp_path / "r.pgm"
    path.write_bytes(b"P2\n1 1\n255\n300\n")
    with pytest.raises(RasterFormatError):
        read_pgm(path)


def test_mask_value_range_enforced_on_write(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.array([[300]]))
