"""Weight archive and dataset ingestion.

Archive layout (all integers little-endian):

    8 bytes   magic "SCFUSE01"
    1 byte    endianness tag (1 = little; anything else is rejected)
    u32       model-spec text length, then that many bytes of UTF-8
              (the ModelSpec line format from scfusion.models)
    u32       entry count, then per entry:
                u16 name length + UTF-8 name
                u16 mask-id length + UTF-8 mask id ("", "even:3", "odd:5", ...)
                u8  ndim, then ndim x u32 dims
    payload   float32 values per entry, concatenated in manifest order

Masks are never stored: a mask id regenerates the pattern from k alone, and
every masked entry is validated on load - a nonzero value at a masked-out
position is rejected with the entry name and position. Save -> load is
bit-identical.

CIFAR-10 binary batches are the standard record format: 1 label byte +
3072 image bytes (channel-planar RGB, 32x32), pixel bytes scaled to [0, 1].
"""

import struct

import numpy as np

from . import models as M
from .kernels import MaskViolationError, make_mask_pair

MAGIC = b"SCFUSE01"
_LITTLE = 1


class ArchiveError(ValueError):
    pass


def _mask_id(param):
    if param.mask is None:
        return ""
    k = param.mask.shape[0]
    pair = make_mask_pair(k)
    if np.array_equal(param.mask, pair.even):
        return f"even:{k}"
    if np.array_equal(param.mask, pair.odd):
        return f"odd:{k}"
    raise ArchiveError(f"parameter {param.name!r} carries an unrecognized mask")


def _mask_from_id(mask_id):
    kind, _, k = mask_id.partition(":")
    pair = make_mask_pair(int(k))
    if kind == "even":
        return pair.even
    if kind == "odd":
        return pair.odd
    raise ArchiveError(f"unknown mask id {mask_id!r}")


def _entries(model):
    entries = [(p.name, p.value, _mask_id(p)) for p in model.parameters()]
    if model.norm_mean is not None:
        entries.append(("norm.mean", model.norm_mean, ""))
        entries.append(("norm.std", model.norm_std, ""))
    return entries


def save(model, path):
    """Write the model's spec, manifest and float32 payload."""
    spec_text = M.emit_spec(model.spec).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", _LITTLE))
        f.write(struct.pack("<I", len(spec_text)))
        f.write(spec_text)
        entries = _entries(model)
        f.write(struct.pack("<I", len(entries)))
        for name, value, mask_id in entries:
            nb = name.encode("utf-8")
            mb = mask_id.encode("utf-8")
            f.write(struct.pack("<H", len(nb)) + nb)
            f.write(struct.pack("<H", len(mb)) + mb)
            f.write(struct.pack("<B", value.ndim))
            f.write(struct.pack(f"<{value.ndim}I", *value.shape))
        for _, value, _ in entries:
            f.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def _read(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise ArchiveError(f"truncated archive while reading {what}")
    return buf


def load(path):
    """Rebuild the model from an archive; validates magic, shapes and masks."""
    with open(path, "rb") as f:
        if _read(f, 8, "magic") != MAGIC:
            raise ArchiveError(f"bad magic: {path} is not a weight archive")
        (endian,) = struct.unpack("<B", _read(f, 1, "endianness tag"))
        if endian != _LITTLE:
            raise ArchiveError(f"unsupported endianness tag {endian}")
        (spec_len,) = struct.unpack("<I", _read(f, 4, "spec length"))
        spec_text = _read(f, spec_len, "model spec").decode("utf-8")
        (count,) = struct.unpack("<I", _read(f, 4, "entry count"))
        manifest = []
        for i in range(count):
            (nlen,) = struct.unpack("<H", _read(f, 2, f"entry {i} name length"))
            name = _read(f, nlen, f"entry {i} name").decode("utf-8")
            (mlen,) = struct.unpack("<H", _read(f, 2, f"entry {i} mask length"))
            mask_id = _read(f, mlen, f"entry {i} mask id").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(f, 1, f"entry {i} ndim"))
            dims = struct.unpack(f"<{ndim}I", _read(f, 4 * ndim, f"entry {i} dims"))
            manifest.append((name, dims, mask_id))
        values = {}
        for name, dims, mask_id in manifest:
            size = int(np.prod(dims, dtype=np.int64)) if dims else 1
            buf = _read(f, 4 * size, f"payload of {name}")
            arr = np.frombuffer(buf, dtype="<f4").reshape(dims).copy()
            if mask_id:
                grid = _mask_from_id(mask_id)
                viol = (arr != 0) & (grid == 0)
                if np.any(viol):
                    pos = tuple(int(i) for i in np.argwhere(viol)[0])
                    raise MaskViolationError(
                        f"archive entry {name!r}: nonzero value {arr[pos]!r} "
                        f"at masked position {pos}"
                    )
            values[name] = arr
        if f.read(1):
            raise ArchiveError("trailing bytes after payload")

    spec = M.parse_spec(spec_text)
    model = M.build(spec, seed=0)
    for p in model.parameters():
        if p.name not in values:
            raise ArchiveError(f"archive is missing parameter {p.name!r}")
        arr = values.pop(p.name)
        if arr.shape != p.value.shape:
            raise ArchiveError(
                f"parameter {p.name!r}: archive shape {arr.shape} does not "
                f"match model shape {p.value.shape}"
            )
        p.value = arr
    if "norm.mean" in values:
        model.norm_mean = values.pop("norm.mean")
        model.norm_std = values.pop("norm.std")
    if values:
        raise ArchiveError(f"archive has unexpected entries: {sorted(values)}")
    return model


RECORD_BYTES = 1 + 3 * 32 * 32


def load_cifar10_batch(path):
    """Read a CIFAR-10 binary batch: (images (n,3,32,32) in [0,1], labels)."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise ValueError(f"{path}: empty file")
    if raw.size % RECORD_BYTES:
        raise ValueError(
            f"{path}: size {raw.size} is not a multiple of the "
            f"{RECORD_BYTES}-byte record"
        )
    recs = raw.reshape(-1, RECORD_BYTES)
    labels = recs[:, 0].astype(np.int64)
    images = recs[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return images, labels


def write_cifar10_batch(path, images, labels):
    """Write records in the CIFAR-10 binary layout; accepts [0,1] floats."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    n = images.shape[0]
    if images.shape != (n, 3, 32, 32):
        raise ValueError(f"expected (n, 3, 32, 32) images, got {images.shape}")
    labels = np.asarray(labels, dtype=np.uint8)
    recs = np.empty((n, RECORD_BYTES), dtype=np.uint8)
    recs[:, 0] = labels
    recs[:, 1:] = images.reshape(n, -1)
    recs.tofile(path)
