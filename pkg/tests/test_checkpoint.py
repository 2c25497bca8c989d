import numpy as np
import pytest

from cucl.checkpoint import CheckpointError, load_arrays, save_arrays


def test_round_trip_is_bit_exact(tmp_path, rng):
    arrays = {"enc.W0": rng.standard_normal((3, 4)), "codebook": rng.standard_normal((2, 3, 2)),
              "scalar": np.array(1.5), "empty": np.zeros((0, 3))}
    back = load_arrays(save_arrays(tmp_path / "c.bin", arrays))
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape
        assert np.array_equal(back[k], arrays[k])


def test_header_layout(tmp_path):
    path = save_arrays(tmp_path / "c.bin", {"a": np.array([1.0, 2.0])})
    raw = path.read_bytes()
    assert raw[:8] == b"CUCLCKPT"
    assert int.from_bytes(raw[8:12], "little") == 1
    assert int.from_bytes(raw[12:16], "little") == 1
    assert raw[-16:] == np.array([1.0, 2.0], dtype="<f8").tobytes()


def test_bad_files_rejected(tmp_path):
    path = save_arrays(tmp_path / "c.bin", {"a": np.ones(4)})
    raw = path.read_bytes()
    for name, data in (("magic", b"XXXXXXXX" + raw[8:]), ("truncated", raw[:-3]), ("trailing", raw + b"\0"),
                       ("header", raw[:14])):
        bad = tmp_path / f"{name}.bin"
        bad.write_bytes(data)
        with pytest.raises(CheckpointError):
            load_arrays(bad)
