"""Grouped spatial pack convolution.

Four stages: kernels are relaid into a 7D volume
``(g, KPG/T_O, CPG/T_I, K_h, K_w, T_I, T_O)``, the padded input into a 6D
volume ``(g, N, CPG/T_I, H_pad, T_I, W_pad)``, the convolution accumulates a
6D output ``(g, N, KPG/T_O, H_out, W_out, T_O)`` and a final relayout yields
NCHW.  The output-channel tile is the innermost dimension of both the packed
kernels and the packed outputs, so the compute loop runs over it last.

Tiles must divide their channel counts exactly; no remainder tiles exist.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from numba import njit, prange

from .errors import ConfigurationError, TileConfigError
from .reference import ConvParams, check_operands
from .tensor import DTYPE, Tensor4, as_tensor4, output_spatial_dims, pad_input


@dataclass(frozen=True)
class TileConfig:
    t_o: int
    t_i: int
    unroll_kw: bool = False

    def label(self) -> str:
        return f"{self.t_o}x{self.t_i}{'u' if self.unroll_kw else ''}"


@dataclass(frozen=True)
class PackedKernels:
    data: np.ndarray
    params: ConvParams
    tiles: TileConfig

    @property
    def dims(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True)
class PackedInputs:
    data: np.ndarray
    params: ConvParams
    tiles: TileConfig

    @property
    def dims(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True)
class PackedOutputs:
    data: np.ndarray
    params: ConvParams
    tiles: TileConfig

    @property
    def dims(self) -> tuple:
        return self.data.shape


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def validate_tiles(params: ConvParams, tiles: TileConfig) -> TileConfig:
    kpg, cpg = params.kpg, params.cpg
    if not 0 < tiles.t_o <= kpg:
        raise TileConfigError(f"T_O={tiles.t_o} violates 0 < T_O <= KPG={kpg}")
    if not 0 < tiles.t_i <= cpg:
        raise TileConfigError(f"T_I={tiles.t_i} violates 0 < T_I <= CPG={cpg}")
    if kpg % tiles.t_o:
        raise TileConfigError(f"T_O={tiles.t_o} does not divide KPG={kpg}")
    if cpg % tiles.t_i:
        raise TileConfigError(f"T_I={tiles.t_i} does not divide CPG={cpg}")
    return tiles


def default_tiles(params: ConvParams, simd_lanes: int = 8) -> TileConfig:
    """Largest divisors of KPG and CPG that fit in one SIMD register."""
    if simd_lanes < 1:
        raise ConfigurationError(f"simd_lanes must be >= 1, got {simd_lanes}")
    t_o = max(d for d in divisors(params.kpg) if d <= simd_lanes)
    t_i = max(d for d in divisors(params.cpg) if d <= simd_lanes)
    return TileConfig(t_o, t_i, False)


def pack_kernels(w: Tensor4, params: ConvParams, tiles: TileConfig) -> PackedKernels:
    w = as_tensor4(w, "weights")
    if w.shape != params.weight_shape:
        raise ConfigurationError(f"weights have shape {w.shape}, params expect {params.weight_shape}")
    validate_tiles(params, tiles)
    g, t_o, t_i = params.groups, tiles.t_o, tiles.t_i
    # (g, k, co, c, ci, kh, kw) -> (g, k, c, kh, kw, ci, co)
    v = w.reshape(g, params.kpg // t_o, t_o, params.cpg // t_i, t_i, params.k_h, params.k_w)
    return PackedKernels(np.ascontiguousarray(v.transpose(0, 1, 3, 5, 6, 4, 2)), params, tiles)


def pack_inputs(x_pad: Tensor4, params: ConvParams, tiles: TileConfig) -> PackedInputs:
    """Relayout an already padded input; see :func:`gspconv.tensor.pad_input`."""
    x_pad = as_tensor4(x_pad, "input")
    if x_pad.shape[1] != params.c_in:
        raise ConfigurationError(f"input has {x_pad.shape[1]} channels, params expect c_in={params.c_in}")
    validate_tiles(params, tiles)
    n, _, hp, wp = x_pad.shape
    t_i = tiles.t_i
    # (n, g, C, c, h, w) -> (g, n, C, h, c, w)
    v = x_pad.reshape(n, params.groups, params.cpg // t_i, t_i, hp, wp)
    return PackedInputs(np.ascontiguousarray(v.transpose(1, 0, 2, 4, 3, 5)), params, tiles)


@njit(cache=True)
def _compute_rolled(xp, wp, out, s_h, s_w, j, b):
    n_cb, t_i = xp.shape[2], xp.shape[4]
    n_occ, k_h, k_w, t_o = wp.shape[1], wp.shape[3], wp.shape[4], wp.shape[6]
    h_out, w_out = out.shape[3], out.shape[4]
    acc = np.empty(t_o, np.float64)
    for occ in range(n_occ):
        for oh in range(h_out):
            for ow in range(w_out):
                acc[:] = 0.0
                iw0 = ow * s_w
                for cb in range(n_cb):
                    for ci in range(t_i):
                        for kh in range(k_h):
                            ih = oh * s_h + kh
                            for kw in range(k_w):
                                xv = np.float64(xp[j, b, cb, ih, ci, iw0 + kw])
                                for ocb in range(t_o):
                                    acc[ocb] += xv * wp[j, occ, cb, kh, kw, ci, ocb]
                for ocb in range(t_o):
                    out[j, b, occ, oh, ow, ocb] = acc[ocb]


@njit(cache=True)
def _compute_unroll3(xp, wp, out, s_h, s_w, j, b):
    n_cb, t_i = xp.shape[2], xp.shape[4]
    n_occ, k_h, t_o = wp.shape[1], wp.shape[3], wp.shape[6]
    h_out, w_out = out.shape[3], out.shape[4]
    acc = np.empty(t_o, np.float64)
    for occ in range(n_occ):
        for oh in range(h_out):
            for ow in range(w_out):
                acc[:] = 0.0
                iw0 = ow * s_w
                for cb in range(n_cb):
                    for ci in range(t_i):
                        for kh in range(k_h):
                            ih = oh * s_h + kh
                            x0 = np.float64(xp[j, b, cb, ih, ci, iw0])
                            x1 = np.float64(xp[j, b, cb, ih, ci, iw0 + 1])
                            x2 = np.float64(xp[j, b, cb, ih, ci, iw0 + 2])
                            for ocb in range(t_o):
                                acc[ocb] += x0 * wp[j, occ, cb, kh, 0, ci, ocb]
                            for ocb in range(t_o):
                                acc[ocb] += x1 * wp[j, occ, cb, kh, 1, ci, ocb]
                            for ocb in range(t_o):
                                acc[ocb] += x2 * wp[j, occ, cb, kh, 2, ci, ocb]
                for ocb in range(t_o):
                    out[j, b, occ, oh, ow, ocb] = acc[ocb]


@njit(cache=True)
def _compute_unroll1(xp, wp, out, s_h, s_w, j, b):
    n_cb, t_i = xp.shape[2], xp.shape[4]
    n_occ, k_h, t_o = wp.shape[1], wp.shape[3], wp.shape[6]
    h_out, w_out = out.shape[3], out.shape[4]
    acc = np.empty(t_o, np.float64)
    for occ in range(n_occ):
        for oh in range(h_out):
            for ow in range(w_out):
                acc[:] = 0.0
                iw0 = ow * s_w
                for cb in range(n_cb):
                    for ci in range(t_i):
                        for kh in range(k_h):
                            xv = np.float64(xp[j, b, cb, oh * s_h + kh, ci, iw0])
                            for ocb in range(t_o):
                                acc[ocb] += xv * wp[j, occ, cb, kh, 0, ci, ocb]
                for ocb in range(t_o):
                    out[j, b, occ, oh, ow, ocb] = acc[ocb]


@njit(cache=True)
def _compute_scalar(xp, wp, out, s_h, s_w, j, b):
    # T_O == 1: accumulate a whole output row so the ow loop vectorizes.
    # Each output element still sums its taps in (c, kh, kw) order.
    n_cb, t_i = xp.shape[2], xp.shape[4]
    n_occ, k_h, k_w = wp.shape[1], wp.shape[3], wp.shape[4]
    h_out, w_out = out.shape[3], out.shape[4]
    acc = np.empty(w_out, np.float64)
    for occ in range(n_occ):
        for oh in range(h_out):
            acc[:] = 0.0
            for cb in range(n_cb):
                for ci in range(t_i):
                    for kh in range(k_h):
                        xrow = xp[j, b, cb, oh * s_h + kh, ci]
                        for kw in range(k_w):
                            wv = np.float64(wp[j, occ, cb, kh, kw, ci, 0])
                            if s_w == 1:
                                xs = xrow[kw:kw + w_out]
                                for ow in range(w_out):
                                    acc[ow] += np.float64(xs[ow]) * wv
                            else:
                                for ow in range(w_out):
                                    acc[ow] += np.float64(xrow[ow * s_w + kw]) * wv
            row = out[j, b, occ, oh, :, 0]
            for ow in range(w_out):
                row[ow] = acc[ow]


@njit(cache=True)
def _run_serial(body_id, xp, wp, out, s_h, s_w):
    for j in range(out.shape[0]):
        for b in range(out.shape[1]):
            if body_id == -1:
                _compute_scalar(xp, wp, out, s_h, s_w, j, b)
            elif body_id == 3:
                _compute_unroll3(xp, wp, out, s_h, s_w, j, b)
            elif body_id == 1:
                _compute_unroll1(xp, wp, out, s_h, s_w, j, b)
            else:
                _compute_rolled(xp, wp, out, s_h, s_w, j, b)


@njit(cache=True, parallel=True)
def _run_parallel(body_id, xp, wp, out, s_h, s_w):
    n_ = out.shape[1]
    for jb in prange(out.shape[0] * n_):
        j = jb // n_
        b = jb % n_
        if body_id == -1:
            _compute_scalar(xp, wp, out, s_h, s_w, j, b)
        elif body_id == 3:
            _compute_unroll3(xp, wp, out, s_h, s_w, j, b)
        elif body_id == 1:
            _compute_unroll1(xp, wp, out, s_h, s_w, j, b)
        else:
            _compute_rolled(xp, wp, out, s_h, s_w, j, b)


def _body_id(tiles: TileConfig, k_w: int) -> int:
    if tiles.t_o == 1:
        return -1
    if tiles.unroll_kw and k_w in (1, 3):
        return k_w
    return 0


def compute(px: PackedInputs, pw: PackedKernels, params: ConvParams, tiles: TileConfig,
            threads: int = 1) -> PackedOutputs:
    """Accumulate the packed convolution; ``threads > 1`` splits groups and batch across threads."""
    if px.params != params or pw.params != params:
        raise ConfigurationError("packed operands were produced for different convolution parameters")
    if (px.tiles.t_o, px.tiles.t_i) != (tiles.t_o, tiles.t_i) or (pw.tiles.t_o, pw.tiles.t_i) != (tiles.t_o, tiles.t_i):
        raise ConfigurationError(
            f"packed operands use tiles {px.tiles.label()}/{pw.tiles.label()}, compute requested {tiles.label()}"
        )
    g, n, _, hp, _, wpad = px.data.shape
    h_out = (hp - params.k_h) // params.s_h + 1
    w_out = (wpad - params.k_w) // params.s_w + 1
    out = np.empty((g, n, params.kpg // tiles.t_o, h_out, w_out, tiles.t_o), dtype=DTYPE)
    run = _run_parallel if threads > 1 else _run_serial
    run(_body_id(tiles, params.k_w), px.data, pw.data, out, params.s_h, params.s_w)
    return PackedOutputs(out, params, tiles)


def unpack_is_identity(py: PackedOutputs) -> bool:
    """Whether the 6D output already has NCHW memory order."""
    g, n, _, h_out, w_out, t_o = py.data.shape
    return (n == 1 or g == 1) and (t_o == 1 or h_out * w_out == 1)


def unpack_outputs(py: PackedOutputs, params: ConvParams) -> Tensor4:
    """NCHW view of the packed outputs; a copy is made only when the layouts differ."""
    g, n, n_occ, h_out, w_out, t_o = py.data.shape
    if unpack_is_identity(py):
        return py.data.reshape(n, params.c_out, h_out, w_out)
    return np.ascontiguousarray(py.data.transpose(1, 0, 2, 5, 3, 4)).reshape(n, params.c_out, h_out, w_out)


def gspc_conv(x: Tensor4, w: Tensor4, params: ConvParams, tiles: TileConfig,
              prepacked: Optional[PackedKernels] = None, threads: int = 1) -> Tensor4:
    x, w = check_operands(x, w, params)
    validate_tiles(params, tiles)
    output_spatial_dims(params, x.shape[2], x.shape[3])
    if prepacked is None:
        prepacked = pack_kernels(w, params, tiles)
    px = pack_inputs(pad_input(x, params.pad), params, tiles)
    return unpack_outputs(compute(px, prepacked, params, tiles, threads), params)


# Packed-kernel files: seven little-endian uint32 dims in 7D order, then float32 LE data.
_HEADER7 = struct.Struct("<7I")


def save_packed_kernels(pw: PackedKernels, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER7.pack(*pw.dims))
        fh.write(pw.data.astype("<f4", copy=False).tobytes())


def load_packed_kernels(path, params: ConvParams, tiles: TileConfig) -> PackedKernels:
    """Read a packed-kernel file and check it matches ``params`` and ``tiles``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER7.size:
        raise ConfigurationError(f"{path}: truncated packed-kernel header")
    dims = _HEADER7.unpack_from(raw)
    validate_tiles(params, tiles)
    want = (params.groups, params.kpg // tiles.t_o, params.cpg // tiles.t_i,
            params.k_h, params.k_w, tiles.t_i, tiles.t_o)
    if dims != want:
        raise ConfigurationError(f"{path}: packed dims {dims} do not match expected {want}")
    body = raw[_HEADER7.size:]
    if len(body) != 4 * int(np.prod(dims)):
        raise ConfigurationError(f"{path}: expected {int(np.prod(dims))} floats, found {len(body) // 4}")
    data = np.frombuffer(body, dtype="<f4").astype(DTYPE).reshape(dims)
    return PackedKernels(data, params, tiles)
