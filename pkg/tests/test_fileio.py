import numpy as np
import pytest

from foilbox import fileio
from foilbox.engine import forward
from foilbox.errors import FormatError


def test_tensor_round_trip_truncates_once(tmp_path, rng):
    a = rng.standard_normal((3, 4, 5))
    p = tmp_path / "a.tnsr"
    fileio.save_tensor(a, p)
    b = fileio.load_tensor(p)
    assert b.shape == a.shape
    assert b.dtype == np.float64
    np.testing.assert_array_equal(b, a.astype(np.float32).astype(np.float64))
    # second round trip is lossless
    fileio.save_tensor(b, p)
    np.testing.assert_array_equal(fileio.load_tensor(p), b)


def test_tensor_file_layout(tmp_path):
    p = tmp_path / "t.tnsr"
    fileio.save_tensor(np.array([[1.0, 2.0]]), p)
    raw = p.read_bytes()
    assert raw[:4] == b"TNSR"
    assert raw[4] == 1  # version
    assert raw[5] == 2  # ndim
    assert raw[6:14] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
    assert np.frombuffer(raw[14:], dtype="<f4").tolist() == [1.0, 2.0]


def test_tensor_truncated_file(tmp_path):
    p = tmp_path / "t.tnsr"
    fileio.save_tensor(np.ones((4, 4)), p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(FormatError, match="truncated"):
        fileio.load_tensor(p)


def test_tensor_wrong_magic_names_expected(tmp_path):
    p = tmp_path / "t.tnsr"
    fileio.save_tensor(np.ones(3), p)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"JUNK"
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="TNSR"):
        fileio.load_tensor(p)


def test_model_round_trip_forward_equal(tmp_path, fixture_net, rng):
    p = tmp_path / "m.anet"
    fileio.save_model(fixture_net, p)
    net2 = fileio.load_model(p)
    fileio.save_model(net2, tmp_path / "m2.anet")
    net3 = fileio.load_model(tmp_path / "m2.anet")
    assert net2.input_dims == fixture_net.input_dims
    assert net2.num_classes == fixture_net.num_classes
    for _ in range(10):
        x = rng.random(fixture_net.input_dims)
        l2 = forward(net2, x)[0]
        l3 = forward(net3, x)[0]
        assert np.array_equal(l2, l3)  # bit-exact once in float32 domain
        np.testing.assert_allclose(l2, forward(fixture_net, x)[0], rtol=1e-5, atol=1e-5)


def test_model_truncated_gives_format_error(tmp_path, fixture_net):
    p = tmp_path / "m.anet"
    fileio.save_model(fixture_net, p)
    p.write_bytes(p.read_bytes()[:100])
    with pytest.raises(FormatError, match="truncated"):
        fileio.load_model(p)


def test_model_wrong_magic(tmp_path, fixture_net):
    p = tmp_path / "m.anet"
    fileio.save_model(fixture_net, p)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"XXXX"
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="ANET"):
        fileio.load_model(p)


def test_labels_round_trip(tmp_path):
    p = tmp_path / "l.lbls"
    fileio.save_labels([0, 1, 2, 3, 2, 1], p)
    assert fileio.load_labels(p) == [0, 1, 2, 3, 2, 1]
    raw = p.read_bytes()
    assert raw[:4] == b"LBLS" and raw[4] == 1


def test_labels_truncated(tmp_path):
    p = tmp_path / "l.lbls"
    fileio.save_labels([7, 7, 7], p)
    p.write_bytes(p.read_bytes()[:-2])
    with pytest.raises(FormatError, match="truncated"):
        fileio.load_labels(p)


def test_pgm_min_max_normalization(tmp_path):
    p = tmp_path / "m.pgm"
    fileio.write_pgm(np.array([[0.0, 1.0], [2.0, 3.0]]), p)
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert list(raw[-4:]) == [0, 85, 170, 255]


def test_pgm_constant_map_renders_mid_gray(tmp_path):
    p = tmp_path / "c.pgm"
    fileio.write_pgm(np.full((3, 3), 7.5), p)
    assert set(p.read_bytes()[-9:]) == {128}


def test_ppm_replicates_gray_channel(tmp_path):
    p = tmp_path / "i.ppm"
    fileio.write_ppm(np.array([[[0.0, 1.0]]]), p)
    raw = p.read_bytes()
    assert raw.startswith(b"P6\n2 1\n255\n")
    assert list(raw[-6:]) == [0, 0, 0, 255, 255, 255]
