"""Dense 4-D tensor container and deterministic elementwise primitives.

Layout is fixed NCHW (batch, channel, row, col) with the column index
fastest. Values are float32 for model state; every op preserves dtype so the
verification oracles can run the same code in float64. All functions are
pure and deterministic: identical inputs give bit-identical outputs.
"""

import numpy as np

# A Tensor4 is a contiguous 4-D ndarray, (n, c, h, w), float32 or float64.
Tensor4 = np.ndarray

_ELEMENT_LIMIT = 2**62  # guards the element-count product against overflow

_BINARY_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def check_tensor4(a, name="tensor"):
    """Validate the Tensor4 invariants; returns the array unchanged."""
    if not isinstance(a, np.ndarray):
        raise TypeError(f"{name}: expected ndarray, got {type(a).__name__}")
    if a.ndim != 4:
        raise ValueError(f"{name}: expected 4 dims (n, c, h, w), got shape {a.shape}")
    if min(a.shape) < 1:
        raise ValueError(f"{name}: all dims must be >= 1, got shape {a.shape}")
    if a.dtype not in (np.float32, np.float64):
        raise TypeError(f"{name}: expected float32/float64 elements, got {a.dtype}")
    return a


def tensor4(data, dtype=np.float32):
    """Build a Tensor4 from nested sequences or an array."""
    return check_tensor4(np.ascontiguousarray(data, dtype=dtype))


def zeros(shape, dtype=np.float32):
    """All-zero Tensor4 of the given (n, c, h, w) shape."""
    if len(shape) != 4:
        raise ValueError(f"zeros: expected 4 dims, got {shape}")
    if any(int(d) < 1 for d in shape):
        raise ValueError(f"zeros: all dims must be >= 1, got {shape}")
    count = 1
    for d in shape:
        count *= int(d)
        if count > _ELEMENT_LIMIT:
            raise ValueError(f"zeros: element count of {shape} overflows")
    return np.zeros(tuple(int(d) for d in shape), dtype=dtype)


def map_binary(a, b, op):
    """Elementwise {add, sub, mul} of two identically shaped tensors."""
    if op not in _BINARY_OPS:
        raise ValueError(f"map_binary: unknown op {op!r}, expected one of {sorted(_BINARY_OPS)}")
    if a.shape != b.shape:
        raise ValueError(f"map_binary: shape mismatch {a.shape} vs {b.shape}")
    return _BINARY_OPS[op](a, b)


def add(a, b):
    return map_binary(a, b, "add")


def sub(a, b):
    return map_binary(a, b, "sub")


def mul(a, b):
    return map_binary(a, b, "mul")


def negate(a):
    """Flip the sign of every element; an exact involution."""
    return np.negative(a)


def relu(a):
    """max(element, 0); idempotent and exact."""
    return np.maximum(a, 0)


def concat_channels(parts):
    """Stack tensors along the channel axis, preserving part order.

    Channel j of part i lands at offset sum(c_0..c_{i-1}) + j; slicing those
    ranges back recovers each part bit-identically.
    """
    parts = list(parts)
    if not parts:
        raise ValueError("concat_channels: need at least one part")
    n, _, h, w = parts[0].shape
    for i, p in enumerate(parts):
        check_tensor4(p, f"part {i}")
        if p.shape[0] != n or p.shape[2:] != (h, w):
            raise ValueError(
                f"concat_channels: part {i} shape {p.shape} does not match "
                f"(n={n}, h={h}, w={w}) of part 0"
            )
    return np.concatenate(parts, axis=1)


def split_channels(x, sizes):
    """Inverse of concat_channels for the given channel block sizes."""
    if sum(sizes) != x.shape[1]:
        raise ValueError(f"split_channels: sizes {sizes} do not sum to {x.shape[1]} channels")
    out = []
    at = 0
    for s in sizes:
        out.append(x[:, at:at + s])
        at += s
    return out
