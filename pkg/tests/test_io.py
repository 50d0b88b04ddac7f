import numpy as np
import pytest

from scfusion import model_io as IO
from scfusion import models as M
from scfusion.datagen import class_pattern_dataset
from scfusion.kernels import MaskViolationError
from scfusion.train import SGDConfig, train


def test_round_trip_bitwise_all_presets(tmp_path):
    for name, spec in M.presets().items():
        model = M.build(spec, seed=3)
        path = tmp_path / f"{name}.scf"
        IO.save(model, path)
        loaded = IO.load(path)
        assert M.emit_spec(loaded.spec) == M.emit_spec(model.spec)
        for a, b in zip(model.parameters(), loaded.parameters()):
            assert a.name == b.name
            assert np.array_equal(a.value, b.value), (name, a.name)


def test_round_trip_preserves_norm_stats(tmp_path):
    images, labels = class_pattern_dataset(16, num_classes=4, seed=0)
    spec = M.ModelSpec((3, 32, 32), [M.ConvD(4, 3, 1, 1), M.GapD(), M.FcD(4)])
    model = M.build(spec, seed=0)
    train(model, images, labels, SGDConfig(lr=0.001, momentum=0.9), epochs=1,
          seed=0, batch_size=8, augment=False)
    path = tmp_path / "m.scf"
    IO.save(model, path)
    loaded = IO.load(path)
    assert np.array_equal(loaded.norm_mean, model.norm_mean)
    assert np.array_equal(loaded.norm_std, model.norm_std)


def test_corrupt_masked_position_rejected_with_position(tmp_path):
    spec = M.presets()["tiny-vgg-scfusion-4"]
    model = M.build(spec, seed=0)
    path = tmp_path / "m.scf"
    IO.save(model, path)

    # patch one masked-out float of layer1.w_even to 0.5 directly in the file
    target = next(p for p in model.parameters() if p.name == "layer1.w_even")
    grid = target.mask
    pos = tuple(int(i) for i in np.argwhere(grid == 0)[0])
    flat_idx = int(np.ravel_multi_index((0, 0, *pos), target.value.shape))

    data = bytearray(path.read_bytes())
    payload_at = _payload_offset(data, model)
    entry_at = payload_at
    for p in model.parameters():
        if p.name == "layer1.w_even":
            break
        entry_at += p.value.size * 4
    at = entry_at + flat_idx * 4
    data[at:at + 4] = np.float32(0.5).tobytes()
    path.write_bytes(bytes(data))

    with pytest.raises(MaskViolationError) as err:
        IO.load(path)
    assert "layer1.w_even" in str(err.value)
    assert str(pos[0]) in str(err.value) and str(pos[1]) in str(err.value)


def _payload_offset(data, model):
    """Walk the header the same way the loader does, return payload start."""
    import struct
    at = 8 + 1
    (spec_len,) = struct.unpack_from("<I", data, at)
    at += 4 + spec_len
    (count,) = struct.unpack_from("<I", data, at)
    at += 4
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, at)
        at += 2 + nlen
        (mlen,) = struct.unpack_from("<H", data, at)
        at += 2 + mlen
        (ndim,) = struct.unpack_from("<B", data, at)
        at += 1 + 4 * ndim
    return at


def test_empty_model_archive(tmp_path):
    spec = M.ModelSpec((1, 1, 1), [])
    model = M.build(spec, seed=0)
    path = tmp_path / "empty.scf"
    IO.save(model, path)
    loaded = IO.load(path)
    assert loaded.parameters() == []


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.scf"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(IO.ArchiveError, match="magic"):
        IO.load(path)


def test_truncated_payload_rejected(tmp_path):
    spec = M.ModelSpec((3, 8, 8), [M.ConvD(4, 3, 1, 1), M.GapD(), M.FcD(2)])
    model = M.build(spec, seed=0)
    path = tmp_path / "m.scf"
    IO.save(model, path)
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(IO.ArchiveError, match="truncated"):
        IO.load(path)


def test_cifar_loader_single_record(tmp_path):
    path = tmp_path / "batch.bin"
    rec = bytes([7]) + bytes([255]) * 3072
    path.write_bytes(rec)
    images, labels = IO.load_cifar10_batch(path)
    assert labels.tolist() == [7]
    assert images.shape == (1, 3, 32, 32)
    assert np.all(images == 1.0)


def test_cifar_loader_errors(tmp_path):
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    with pytest.raises(ValueError, match="empty"):
        IO.load_cifar10_batch(empty)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"\x00" * 100)
    with pytest.raises(ValueError, match="multiple"):
        IO.load_cifar10_batch(bad)


def test_cifar_loader_two_records_order(tmp_path):
    path = tmp_path / "two.bin"
    rec1 = bytes([1]) + bytes([0]) * 3072
    rec2 = bytes([2]) + bytes([255]) * 3072
    path.write_bytes(rec1 + rec2)
    images, labels = IO.load_cifar10_batch(path)
    assert labels.tolist() == [1, 2]
    assert images[0].max() == 0.0 and images[1].min() == 1.0


def test_cifar_write_read_round_trip(tmp_path):
    images, labels = class_pattern_dataset(10, num_classes=4, seed=1)
    path = tmp_path / "gen.bin"
    IO.write_cifar10_batch(path, images, labels)
    back_images, back_labels = IO.load_cifar10_batch(path)
    assert np.array_equal(back_labels, labels)
    # one uint8 quantization step of slack
    assert np.max(np.abs(back_images - images)) <= 1.0 / 255.0 + 1e-7
    # a second write->read is bit-identical (loader purity)
    IO.write_cifar10_batch(tmp_path / "gen2.bin", back_images, back_labels)
    again, _ = IO.load_cifar10_batch(tmp_path / "gen2.bin")
    assert np.array_equal(again, back_images)
