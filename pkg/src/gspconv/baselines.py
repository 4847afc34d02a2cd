"""Baseline grouped convolutions: sliding-window direct convolution and im2col + GEMM.

Matrices are plain 2D float32 arrays.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError
from .reference import ConvParams, check_operands
from .tensor import DTYPE, Tensor4, as_tensor4, output_spatial_dims, pad_input

Matrix2D = np.ndarray

# GEMM blocking; rows of A per register block and the k/n cache blocks
_MR = 4
_KC = 128
_NC = 512


@njit(cache=True)
def _direct_kernel(x, w, out, kpg, cpg, s_h, s_w, p_h, p_w):
    n_, c_out, h_out, w_out = out.shape
    h_in, w_in = x.shape[2], x.shape[3]
    k_h, k_w = w.shape[2], w.shape[3]
    for n in range(n_):
        for k in range(c_out):
            base = (k // kpg) * cpg
            for oh in range(h_out):
                for ow in range(w_out):
                    acc = 0.0
                    for c in range(cpg):
                        for kh in range(k_h):
                            ih = oh * s_h + kh - p_h
                            if ih < 0 or ih >= h_in:
                                continue
                            for kw in range(k_w):
                                iw = ow * s_w + kw - p_w
                                if iw < 0 or iw >= w_in:
                                    continue
                                acc += np.float64(x[n, base + c, ih, iw]) * np.float64(w[k, c, kh, kw])
                    out[n, k, oh, ow] = acc


def grouped_direct_conv_timed(x: Tensor4, w: Tensor4, params: ConvParams) -> Tensor4:
    """Direct convolution without packing or a padded copy.

    Out-of-bounds taps are skipped rather than read from a zero border;
    skipping a zero product leaves a float64 accumulator unchanged, so the
    result matches the oracle exactly.
    """
    x, w = check_operands(x, w, params)
    out = np.empty(params.output_shape(x.shape[0], x.shape[2], x.shape[3]), dtype=DTYPE)
    _direct_kernel(x, w, out, params.kpg, params.cpg, params.s_h, params.s_w,
                   params.pad.pad_h, params.pad.pad_w)
    return out


def im2col_group(x_pad: Tensor4, params: ConvParams, j: int, n: int = 0) -> Matrix2D:
    """Receptive fields of group ``j`` for batch item ``n`` as columns.

    Row ``c*K_h*K_w + kh*K_w + kw``, column ``oh*W_out + ow``.
    """
    if not 0 <= j < params.groups:
        raise ConfigurationError(f"group index {j} out of range [0, {params.groups})")
    x_pad = as_tensor4(x_pad, "input")
    hp, wp = x_pad.shape[2], x_pad.shape[3]
    h_out = (hp - params.k_h) // params.s_h + 1
    w_out = (wp - params.k_w) // params.s_w + 1
    if h_out < 1 or w_out < 1:
        raise ConfigurationError(f"kernel {params.k_h}x{params.k_w} larger than padded input {hp}x{wp}")
    cpg = params.cpg
    xg = x_pad[n, j * cpg:(j + 1) * cpg]
    win = sliding_window_view(xg, (params.k_h, params.k_w), axis=(1, 2))
    win = win[:, ::params.s_h, ::params.s_w][:, :h_out, :w_out]
    # (c, oh, ow, kh, kw) -> (c, kh, kw, oh, ow)
    cols = win.transpose(0, 3, 4, 1, 2)
    return np.ascontiguousarray(cols).reshape(cpg * params.k_h * params.k_w, h_out * w_out)


@njit(cache=True)
def _gemm_kernel(a, b, acc):
    m, k = a.shape
    n = b.shape[1]
    for k0 in range(0, k, _KC):
        k1 = min(k0 + _KC, k)
        for n0 in range(0, n, _NC):
            n1 = min(n0 + _NC, n)
            i = 0
            while i + _MR <= m:
                for kk in range(k0, k1):
                    a0 = np.float64(a[i, kk])
                    a1 = np.float64(a[i + 1, kk])
                    a2 = np.float64(a[i + 2, kk])
                    a3 = np.float64(a[i + 3, kk])
                    for jj in range(n0, n1):
                        bv = np.float64(b[kk, jj])
                        acc[i, jj] += a0 * bv
                        acc[i + 1, jj] += a1 * bv
                        acc[i + 2, jj] += a2 * bv
                        acc[i + 3, jj] += a3 * bv
                i += _MR
            while i < m:
                for kk in range(k0, k1):
                    av = np.float64(a[i, kk])
                    for jj in range(n0, n1):
                        acc[i, jj] += av * np.float64(b[kk, jj])
                i += 1


def gemm(a: Matrix2D, b: Matrix2D) -> Matrix2D:
    """Blocked matrix product; each entry sums over k in ascending order in float64."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"cannot multiply {a.shape} by {b.shape}")
    a = np.ascontiguousarray(a, dtype=DTYPE)
    b = np.ascontiguousarray(b, dtype=DTYPE)
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    _gemm_kernel(a, b, acc)
    return acc.astype(DTYPE)


def im2col_grouped_conv(x: Tensor4, w: Tensor4, params: ConvParams) -> Tensor4:
    x, w = check_operands(x, w, params)
    n_ = x.shape[0]
    h_out, w_out = output_spatial_dims(params, x.shape[2], x.shape[3])
    out = np.empty((n_, params.c_out, h_out, w_out), dtype=DTYPE)
    xp = pad_input(x, params.pad)
    kpg = params.kpg
    w_mat = w.reshape(params.groups, kpg, params.cpg * params.k_h * params.k_w)
    for n in range(n_):
        for j in range(params.groups):
            cols = im2col_group(xp, params, j, n)
            out[n, j * kpg:(j + 1) * kpg] = gemm(w_mat[j], cols).reshape(kpg, h_out, w_out)
    return out
