"""Reference grouped convolution and the convolution parameter record.

The oracle is a plain loop nest over a materialized padded input.
Every kernel in the package accumulates in float64 over (c, kh, kw) in
ascending order and rounds once to float32, so all of them agree with this
oracle bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError
from .tensor import DTYPE, PaddingSpec, Tensor4, as_tensor4, output_spatial_dims, pad_input


@dataclass(frozen=True)
class ConvParams:
    c_in: int
    c_out: int
    k_h: int
    k_w: int
    s_h: int = 1
    s_w: int = 1
    pad: PaddingSpec = field(default_factory=PaddingSpec)
    groups: int = 1

    def __post_init__(self):
        if min(self.c_in, self.c_out) < 1:
            raise ConfigurationError(f"channel counts must be >= 1 (c_in={self.c_in}, c_out={self.c_out})")
        if min(self.k_h, self.k_w) < 1:
            raise ConfigurationError(f"kernel extents must be >= 1, got {self.k_h}x{self.k_w}")
        if min(self.s_h, self.s_w) < 1:
            raise ConfigurationError(f"strides must be >= 1, got ({self.s_h}, {self.s_w})")
        g = self.groups
        if g < 1 or self.c_in % g or self.c_out % g:
            raise ConfigurationError(
                f"groups={g} must be >= 1 and divide c_in={self.c_in} and c_out={self.c_out}"
            )

    @classmethod
    def square(cls, c_in, c_out, k, stride=1, pad=0, groups=1) -> "ConvParams":
        return cls(c_in, c_out, k, k, stride, stride, PaddingSpec(pad, pad), groups)

    @property
    def kpg(self) -> int:
        """Kernels (output channels) per group."""
        return self.c_out // self.groups

    @property
    def cpg(self) -> int:
        """Input channels per group."""
        return self.c_in // self.groups

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.c_out, self.cpg, self.k_h, self.k_w)

    def output_shape(self, n: int, in_h: int, in_w: int) -> tuple[int, int, int, int]:
        h_out, w_out = output_spatial_dims(self, in_h, in_w)
        return (n, self.c_out, h_out, w_out)


def check_operands(x: Tensor4, w: Tensor4, params: ConvParams) -> tuple[Tensor4, Tensor4]:
    x = as_tensor4(x, "input")
    w = as_tensor4(w, "weights")
    if x.shape[1] != params.c_in:
        raise ConfigurationError(f"input has {x.shape[1]} channels, params expect c_in={params.c_in}")
    if w.shape != params.weight_shape:
        raise ConfigurationError(f"weights have shape {w.shape}, params expect {params.weight_shape}")
    return x, w


@njit(cache=True)
def _oracle_kernel(xp, w, out, kpg, cpg, s_h, s_w):
    n_, c_out, h_out, w_out = out.shape
    k_h, k_w = w.shape[2], w.shape[3]
    row = np.empty(w_out, np.float64)
    for n in range(n_):
        for k in range(c_out):
            base = (k // kpg) * cpg
            for oh in range(h_out):
                # a whole output row at once; each element still sums over (c, kh, kw) in order
                row[:] = 0.0
                for c in range(cpg):
                    for kh in range(k_h):
                        for kw in range(k_w):
                            wv = np.float64(w[k, c, kh, kw])
                            for ow in range(w_out):
                                row[ow] += np.float64(xp[n, base + c, oh * s_h + kh, ow * s_w + kw]) * wv
                for ow in range(w_out):
                    out[n, k, oh, ow] = row[ow]


def direct_grouped_conv(x: Tensor4, w: Tensor4, params: ConvParams) -> Tensor4:
    x, w = check_operands(x, w, params)
    out = np.empty(params.output_shape(x.shape[0], x.shape[2], x.shape[3]), dtype=DTYPE)
    xp = pad_input(x, params.pad)
    _oracle_kernel(xp, w, out, params.kpg, params.cpg, params.s_h, params.s_w)
    return out


def pointwise_conv(x: Tensor4, w: Tensor4) -> Tensor4:
    w = as_tensor4(w, "pointwise weights")
    if w.shape[2:] != (1, 1):
        raise ConfigurationError(f"pointwise weights must be 1x1, got {w.shape[2]}x{w.shape[3]}")
    return direct_grouped_conv(x, w, ConvParams(w.shape[1], w.shape[0], 1, 1))


def grouped_block(x: Tensor4, w_g: Tensor4, w_p: Tensor4, params: ConvParams) -> Tensor4:
    """Grouped convolution followed by a 1x1 convolution that remixes channels."""
    if w_p.shape[1] != params.c_out:
        raise ConfigurationError(
            f"pointwise stage expects {w_p.shape[1]} channels, grouped stage produces {params.c_out}"
        )
    return pointwise_conv(direct_grouped_conv(x, w_g, params), w_p)
