"""Dense NCHW float32 tensors: shape arithmetic, padding, seeded data, comparison.

A ``Tensor4`` is a C-contiguous 4D ``numpy.ndarray`` of dtype float32 laid
out as (n, c, h, w) in row-major order.  Random data comes from numpy's PCG64
generator: ``Generator(PCG64(seed)).random(count, dtype=float32)`` mapped to
``2*u - 1``, so values lie in [-1, 1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, NamedTuple, Union

import numpy as np

from .errors import ComparisonError, ConfigurationError

if TYPE_CHECKING:
    from .reference import ConvParams

DTYPE = np.float32

Tensor4 = np.ndarray


class Shape4(NamedTuple):
    n: int
    c: int
    h: int
    w: int

    @property
    def element_count(self) -> int:
        return self.n * self.c * self.h * self.w

    def validate(self) -> "Shape4":
        if any(int(d) < 1 for d in self):
            raise ConfigurationError(f"all extents must be >= 1, got {tuple(self)}")
        return self


@dataclass(frozen=True)
class PaddingSpec:
    pad_h: int = 0
    pad_w: int = 0

    def __post_init__(self):
        if self.pad_h < 0 or self.pad_w < 0:
            raise ConfigurationError(f"padding must be non-negative, got ({self.pad_h}, {self.pad_w})")


def shape_of(x: Tensor4) -> Shape4:
    return Shape4(*x.shape)


def as_tensor4(x, name: str = "tensor") -> Tensor4:
    """Return ``x`` as a contiguous float32 4D array, copying only when needed."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim != 4:
        raise ConfigurationError(f"{name} must be 4D (NCHW), got ndim={arr.ndim}")
    Shape4(*arr.shape).validate()
    return arr


def flat_index(shape: Shape4, n: int, c: int, h: int, w: int) -> int:
    N, C, H, W = shape
    for name, v, hi in (("n", n, N), ("c", c, C), ("h", h, H), ("w", w, W)):
        if not 0 <= v < hi:
            raise IndexError(f"coordinate {name}={v} out of range [0, {hi})")
    return ((n * C + c) * H + h) * W + w


def pad_input(x: Tensor4, pad: PaddingSpec) -> Tensor4:
    """Zero-pad the two spatial axes; returns ``x`` itself when no padding is requested."""
    if pad.pad_h == 0 and pad.pad_w == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * pad.pad_h, w + 2 * pad.pad_w), dtype=DTYPE)
    out[:, :, pad.pad_h:pad.pad_h + h, pad.pad_w:pad.pad_w + w] = x
    return out


def output_spatial_dims(params: "ConvParams", in_h: int, in_w: int) -> tuple[int, int]:
    ph, pw = params.pad.pad_h, params.pad.pad_w
    if in_h + 2 * ph < params.k_h or in_w + 2 * pw < params.k_w:
        raise ConfigurationError(
            f"kernel {params.k_h}x{params.k_w} larger than padded input "
            f"{in_h + 2 * ph}x{in_w + 2 * pw}"
        )
    return ((in_h + 2 * ph - params.k_h) // params.s_h + 1,
            (in_w + 2 * pw - params.k_w) // params.s_w + 1)


def allclose(a: Tensor4, b: Tensor4, rtol: float = 1e-5, atol: float = 1e-8) -> bool:
    """True iff ``|a - b| <= atol + rtol * |b|`` elementwise (asymmetric in ``b``)."""
    if a.shape != b.shape:
        raise ComparisonError(f"shape mismatch: {a.shape} vs {b.shape}")
    a64 = np.asarray(a, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    return bool(np.all(np.abs(a64 - b64) <= atol + rtol * np.abs(b64)))


def max_rel_error(a: Tensor4, b: Tensor4) -> float:
    """Largest ``|a - b| / max(|b|, tiny)``; 0.0 for identical tensors."""
    if a.shape != b.shape:
        raise ComparisonError(f"shape mismatch: {a.shape} vs {b.shape}")
    a64 = np.asarray(a, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    diff = np.abs(a64 - b64)
    if diff.size == 0 or not diff.any():
        return 0.0
    return float(np.max(diff / np.maximum(np.abs(b64), np.finfo(np.float32).tiny)))


def random_fill(shape, seed: int) -> Tensor4:
    shape = Shape4(*shape).validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(shape.element_count, dtype=DTYPE)
    return (u * DTYPE(2) - DTYPE(1)).reshape(shape)


# Fixture files: four little-endian uint32 extents, then float32 LE data.
_HEADER4 = struct.Struct("<4I")


def save_tensor(x: Tensor4, path: Union[str, Path]) -> None:
    x = as_tensor4(x)
    with open(path, "wb") as fh:
        fh.write(_HEADER4.pack(*x.shape))
        fh.write(x.astype("<f4", copy=False).tobytes())


def load_tensor(path: Union[str, Path]) -> Tensor4:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER4.size:
        raise ConfigurationError(f"{path}: truncated tensor header")
    dims = Shape4(*_HEADER4.unpack_from(raw)).validate()
    body = raw[_HEADER4.size:]
    if len(body) != 4 * dims.element_count:
        raise ConfigurationError(
            f"{path}: expected {dims.element_count} floats for shape {tuple(dims)}, "
            f"found {len(body) // 4}"
        )
    return np.frombuffer(body, dtype="<f4").astype(DTYPE).reshape(dims)
