import numpy as np
import os
import pytest
import coca3d.checkpoint
import coca3d.nn


def test_write_read(tmp_path):
    filename = os.path.join(tmp_path, "test.c3ca")
    records = {
        "w": (np.arange(6.0).reshape(2, 3), False),
        "scalar": (np.array(1.5), True),
    }
    coca3d.checkpoint.write(filename, records)

    # Header, then name length, name, flag, ndim, shape and payload
    assert os.path.getsize(filename) == 12 + (4 + 1 + 5 + 8 + 48) + (4 + 6 + 5 + 0 + 8)
    with open(filename, "rb") as infile:
        assert infile.read(4) == coca3d.checkpoint.MAGIC

    result = coca3d.checkpoint.read(filename)
    assert list(result.keys()) == ["w", "scalar"]
    np.testing.assert_array_equal(result["w"][0], records["w"][0])
    assert result["w"][1] is False
    assert result["scalar"][0] == 1.5
    assert result["scalar"][1] is True


def test_read_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        coca3d.checkpoint.read(os.path.join(tmp_path, "missing.c3ca"))

    filename = os.path.join(tmp_path, "bad.c3ca")
    with open(filename, "wb") as outfile:
        outfile.write(b"XXXX" + b"\0" * 8)
    with pytest.raises(RuntimeError):
        coca3d.checkpoint.read(filename)

    # Truncate a valid file
    coca3d.checkpoint.write(filename, {"w": (np.ones(4), False)})
    with open(filename, "rb") as infile:
        data = infile.read()
    with open(filename, "wb") as outfile:
        outfile.write(data[:-3])
    with pytest.raises(RuntimeError, match="Truncated"):
        coca3d.checkpoint.read(filename)


def test_save_restore(tmp_path):
    filename = os.path.join(tmp_path, "model.c3ca")
    model = coca3d.nn.MLP(3, 4, 2, np.random.default_rng(0))
    model.layer1.freeze()
    coca3d.checkpoint.save(filename, model, extra={"step": (np.array(7.0), False)})

    other = coca3d.nn.MLP(3, 4, 2, np.random.default_rng(1))
    records = coca3d.checkpoint.load(filename)
    coca3d.checkpoint.restore(other, records)
    for name, p in other.parameters().items():
        np.testing.assert_array_equal(p.data, model.parameters()[name].data)
    assert other.layer1.weight.frozen
    assert not other.layer2.weight.frozen
    assert coca3d.checkpoint.frozen_hash(other) == coca3d.checkpoint.frozen_hash(model)

    with pytest.raises(RuntimeError):
        coca3d.checkpoint.save(filename, model, extra={"layer1.weight": (np.ones(1), False)})

    wrong = coca3d.nn.MLP(3, 5, 2, np.random.default_rng(0))
    with pytest.raises(RuntimeError):
        coca3d.checkpoint.restore(wrong, records)


def test_frozen_hash_sees_payload_changes():
    model = coca3d.nn.MLP(3, 4, 2, np.random.default_rng(0))
    model.layer1.freeze()
    before = coca3d.checkpoint.frozen_hash(model)
    model.layer2.weight.data[0, 0] += 1
    assert coca3d.checkpoint.frozen_hash(model) == before
    model.layer1.weight.data[0, 0] += 1
    assert coca3d.checkpoint.frozen_hash(model) != before
