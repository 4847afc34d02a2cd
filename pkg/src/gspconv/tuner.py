"""Empirical search over GSPC tile sizes and K_w unrolling.

Tuning records are JSON files, one per layer shape::

    {
      "format": "gspconv-tuning-record",
      "version": 1,
      "layer_key": "n1_ci32_co32_k3x3_s1x1_p1x1_g2_i32x32",
      "platform_tag": "Linux-x86_64-...",
      "best": {"t_o": 16, "t_i": 4, "unroll_kw": true, "median_ns": 812345,
               "reps": 5, "checksum": "…", "valid": true, "error": null},
      "all_trials": [ ...same objects... ]
    }

Times are integer nanoseconds.  ``best`` is the valid trial with the smallest
median; invalid trials keep ``median_ns`` null and carry an ``error``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import random
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from . import baselines, gspc
from .errors import ConfigurationError, RecordError, RecordKeyMismatch, TuningError
from .gspc import TileConfig, default_tiles, divisors
from .reference import ConvParams, direct_grouped_conv
from .tensor import random_fill
from .workloads import LayerSpec

log = logging.getLogger(__name__)

RECORD_FORMAT = "gspconv-tuning-record"
RECORD_VERSION = 1

KERNELS = ("gspc", "direct", "im2col")


@dataclass(frozen=True)
class TrialResult:
    tiles: Optional[TileConfig]
    median_ns: Optional[int]
    reps: int
    checksum: str
    valid: bool = True
    error: Optional[str] = None


@dataclass
class TuningRecord:
    layer_key: str
    best: TrialResult
    all_trials: list[TrialResult] = field(default_factory=list)
    platform_tag: str = ""


def platform_tag() -> str:
    cpu = platform.processor() or ""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return f"{platform.system()}-{platform.machine()}-{cpu}".strip("-")


def checksum(y: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(y, dtype=np.float32).tobytes()).hexdigest()[:16]


def median_ns(samples) -> int:
    return int(round(statistics.median(samples)))


def layer_data(layer: LayerSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-seed input and weights for a layer."""
    return random_fill(layer.input_shape, seed), random_fill(layer.params.weight_shape, seed + 1)


def oracle_checksum(layer: LayerSpec, seed: int = 0) -> str:
    x, w = layer_data(layer, seed)
    return checksum(direct_grouped_conv(x, w, layer.params))


def enumerate_space(params: ConvParams) -> list[TileConfig]:
    return [TileConfig(t_o, t_i, unroll)
            for t_o in divisors(params.kpg)
            for t_i in divisors(params.cpg)
            for unroll in (False, True)]


def prepare(kernel_id: str, layer: LayerSpec, tiles: Optional[TileConfig], w: np.ndarray,
            threads: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """Return a one-argument callable running ``kernel_id`` on an input tensor.

    For GSPC the weights are packed here, outside whatever region the caller
    times; input padding and packing happen inside the callable.
    """
    params = layer.params
    if kernel_id == "gspc":
        if tiles is None:
            raise ConfigurationError("gspc needs a tile configuration")
        packed = gspc.pack_kernels(w, params, tiles)
        return lambda x: gspc.gspc_conv(x, w, params, tiles, prepacked=packed, threads=threads)
    if kernel_id == "direct":
        return lambda x: baselines.grouped_direct_conv_timed(x, w, params)
    if kernel_id == "im2col":
        return lambda x: baselines.im2col_grouped_conv(x, w, params)
    raise ConfigurationError(f"unknown kernel {kernel_id!r}; expected one of {', '.join(KERNELS)}")


def time_callable(fn: Callable[[], object], reps: int, warmup: int) -> list[int]:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(max(time.perf_counter_ns() - t0, 1))
    return samples


def measure(kernel_id: str, tiles: Optional[TileConfig], layer: LayerSpec, reps: int = 5,
            warmup: int = 1, seed: int = 0, expected_checksum: Optional[str] = None,
            threads: int = 1) -> TrialResult:
    if reps < 3 or warmup < 1:
        raise ConfigurationError(f"need reps >= 3 and warmup >= 1, got reps={reps}, warmup={warmup}")
    x, w = layer_data(layer, seed)
    try:
        run = prepare(kernel_id, layer, tiles, w, threads)
        y = run(x)
        samples = time_callable(lambda: run(x), reps, warmup)
    except ConfigurationError:
        raise
    except Exception as exc:  # a failing candidate must not abort the search
        log.warning("trial %s %s failed: %s", kernel_id, tiles, exc)
        return TrialResult(tiles, None, reps, "", valid=False, error=f"{type(exc).__name__}: {exc}")
    digest = checksum(y)
    if expected_checksum is not None and digest != expected_checksum:
        return TrialResult(tiles, None, reps, digest, valid=False,
                           error=f"checksum {digest} != oracle {expected_checksum}")
    return TrialResult(tiles, median_ns(samples), reps, digest)


def tune(layer: LayerSpec, strategy: str = "exhaustive", budget: Optional[int] = None,
         search_seed: int = 0, simd_lanes: int = 8, reps: int = 5, warmup: int = 1,
         seed: int = 0, tag: Optional[str] = None) -> TuningRecord:
    """Measure candidate tile configurations for one layer and keep the fastest.

    ``strategy="random"`` samples ``budget`` configurations without
    replacement (seeded by ``search_seed``).  The default tiles are always
    measured, so the result is never slower than the default in this session.
    """
    space = enumerate_space(layer.params)
    if strategy == "exhaustive":
        candidates = list(space)
    elif strategy == "random":
        if budget is None or budget < 1:
            raise ConfigurationError("random search needs a positive budget")
        candidates = random.Random(search_seed).sample(space, min(budget, len(space)))
    else:
        raise ConfigurationError(f"unknown strategy {strategy!r}; expected exhaustive or random")
    default = default_tiles(layer.params, simd_lanes)
    if default not in candidates:
        candidates.append(default)

    expected = oracle_checksum(layer, seed)
    trials = [measure("gspc", t, layer, reps, warmup, seed, expected) for t in candidates]
    valid = [t for t in trials if t.valid]
    if not valid:
        raise TuningError(f"no valid trial for {layer.key()}: {trials[0].error}")
    best = min(valid, key=lambda t: t.median_ns)
    return TuningRecord(layer.key(), best, trials, tag if tag is not None else platform_tag())


def _trial_to_dict(t: TrialResult) -> dict:
    d = {"t_o": None, "t_i": None, "unroll_kw": None}
    if t.tiles is not None:
        d = {"t_o": t.tiles.t_o, "t_i": t.tiles.t_i, "unroll_kw": t.tiles.unroll_kw}
    d.update(median_ns=t.median_ns, reps=t.reps, checksum=t.checksum, valid=t.valid, error=t.error)
    return d


def _field(d: dict, name: str, types, where: str, nullable: bool = False):
    if name not in d:
        raise RecordError(f"{where}: missing field {name!r}")
    v = d[name]
    if v is None and nullable:
        return v
    if isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise RecordError(f"{where}: field {name!r} has invalid value {v!r}")
    if not isinstance(v, types):
        raise RecordError(f"{where}: field {name!r} has invalid value {v!r}")
    return v


def _trial_from_dict(d, where: str) -> TrialResult:
    if not isinstance(d, dict):
        raise RecordError(f"{where}: expected an object")
    t_o = _field(d, "t_o", int, where, nullable=True)
    t_i = _field(d, "t_i", int, where, nullable=True)
    unroll = _field(d, "unroll_kw", bool, where, nullable=True)
    tiles = None if t_o is None else TileConfig(t_o, t_i, bool(unroll))
    valid = _field(d, "valid", bool, where)
    med = _field(d, "median_ns", int, where, nullable=not valid)
    if valid and med <= 0:
        raise RecordError(f"{where}: field 'median_ns' must be positive, got {med}")
    return TrialResult(tiles, med, _field(d, "reps", int, where), _field(d, "checksum", str, where),
                       valid, _field(d, "error", str, where, nullable=True))


def save_record(record: TuningRecord, path: Union[str, Path]) -> None:
    doc = {
        "format": RECORD_FORMAT,
        "version": RECORD_VERSION,
        "layer_key": record.layer_key,
        "platform_tag": record.platform_tag,
        "best": _trial_to_dict(record.best),
        "all_trials": [_trial_to_dict(t) for t in record.all_trials],
    }
    try:
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    except OSError as exc:
        raise RecordError(f"cannot write tuning record {path}: {exc}") from exc


def load_record(path: Union[str, Path], layer_key: Optional[str] = None) -> TuningRecord:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise RecordError(f"cannot read tuning record {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RecordError(f"{path}: not valid JSON ({exc})") from exc
    where = str(path)
    if not isinstance(doc, dict):
        raise RecordError(f"{where}: expected a JSON object")
    if doc.get("format") != RECORD_FORMAT:
        raise RecordError(f"{where}: field 'format' must be {RECORD_FORMAT!r}")
    if doc.get("version") != RECORD_VERSION:
        raise RecordError(f"{where}: field 'version' must be {RECORD_VERSION}")
    key = _field(doc, "layer_key", str, where)
    if layer_key is not None and key != layer_key:
        raise RecordKeyMismatch(f"{where}: record is for {key}, requested {layer_key}")
    trials_raw = _field(doc, "all_trials", list, where)
    trials = [_trial_from_dict(t, f"{where}: all_trials[{i}]") for i, t in enumerate(trials_raw)]
    best = _trial_from_dict(doc.get("best"), f"{where}: best")
    return TuningRecord(key, best, trials, _field(doc, "platform_tag", str, where))
