"""Verification sweeps, per-layer benchmarking and per-network tuning.

Everything here is single-threaded orchestration; only the GSPC compute
stage honours ``threads``.
"""

from __future__ import annotations

import logging
import os
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import baselines, gspc, tuner
from .errors import ConfigurationError, RecordError
from .gspc import TileConfig, default_tiles, divisors
from .reference import ConvParams, direct_grouped_conv
from .tensor import PaddingSpec, allclose, max_rel_error
from .workloads import (VARIANTS, LayerSpec, NetworkSpec, builtin_network, expected_time,
                        load_network_file, macs, normalize_variant, params_count)

log = logging.getLogger(__name__)

RTOL = 1e-5
ATOL = 1e-6

DEFAULT_RECORD_DIR = "gspc_records"

Kernel = Callable[[np.ndarray, np.ndarray, ConvParams], np.ndarray]


@dataclass
class BenchConfig:
    network: Optional[str] = None
    variants: Sequence[str] = ("S",)
    layers_file: Optional[str] = None
    kernels: Sequence[str] = ("gspc",)
    tuned: bool = False
    reps: int = 5
    warmup: int = 1
    seed: int = 0
    simd_lanes: int = 8
    threads: int = 1
    out: Optional[str] = None
    format: str = "csv"
    record_dir: Optional[str] = None
    strategy: str = "exhaustive"
    budget: Optional[int] = None
    resume: bool = False
    suite_size: int = 200

    def __post_init__(self):
        if self.reps < 3:
            raise ConfigurationError(f"reps must be >= 3, got {self.reps}")
        if self.warmup < 1:
            raise ConfigurationError(f"warmup must be >= 1, got {self.warmup}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"format must be csv or json, got {self.format!r}")
        for k in self.kernels:
            if k not in tuner.KERNELS:
                raise ConfigurationError(f"unknown kernel {k!r}; expected one of {', '.join(tuner.KERNELS)}")
        self.variants = [normalize_variant(v) for v in self.variants]

    def records(self) -> Path:
        return Path(self.record_dir or os.environ.get("GSPC_RECORD_DIR") or DEFAULT_RECORD_DIR)

    def networks(self) -> list[NetworkSpec]:
        if self.layers_file:
            return [load_network_file(self.layers_file)]
        if not self.network:
            return []
        return [builtin_network(self.network, v) for v in self.variants]


@dataclass
class BenchRow:
    network: str
    variant: str
    layer: str
    kernel: str
    t_o: Optional[int]
    t_i: Optional[int]
    unroll: Optional[bool]
    median_ms: float
    weight_pack_ms: Optional[float]
    macs: int
    params: int
    expected_ms: Optional[float] = None
    ratio: Optional[float] = None
    checksum: str = ""


@dataclass
class BenchResult:
    rows: list[BenchRow]
    warnings: list[str] = field(default_factory=list)
    threads: int = 1


# -- verification -----------------------------------------------------------

def random_suite(count: int = 200, seed: int = 0, max_channels: int = 32) -> list[LayerSpec]:
    """Random small layers covering g in {1, 2, 4, 8, C_in}, K in {1, 3}, stride {1, 2}, pad {0, 1}.

    The group choices rotate deterministically so each appears equally often.
    """
    rng = np.random.default_rng(seed)
    choices = (1, 2, 4, 8, "C_in")
    out = []
    for i in range(count):
        g_choice = choices[i % len(choices)]
        k = int(rng.choice([1, 3]))
        stride = int(rng.choice([1, 2]))
        pad = int(rng.choice([0, 1]))
        if g_choice == "C_in":
            c_in = int(rng.integers(1, max_channels + 1))
            c_out = c_in * int(rng.choice([1, 2])) if c_in * 2 <= max_channels else c_in
            g = c_in
        else:
            g = g_choice
            c_in = g * int(rng.integers(1, max_channels // g + 1))
            c_out = g * int(rng.integers(1, max_channels // g + 1))
        h = int(rng.integers(max(k - 2 * pad, 1), 12))
        w = int(rng.integers(max(k - 2 * pad, 1), 12))
        n = int(rng.choice([1, 1, 2]))
        params = ConvParams(c_in, c_out, k, k, stride, stride, PaddingSpec(pad, pad), g)
        out.append(LayerSpec(params, h, w, "grouped" if g > 1 else "standard", n))
    return out


def random_tiles(params: ConvParams, rng: np.random.Generator) -> TileConfig:
    return TileConfig(int(rng.choice(divisors(params.kpg))), int(rng.choice(divisors(params.cpg))),
                      bool(rng.integers(2)))


def kernel_registry(simd_lanes: int = 8, tile_rng: Optional[np.random.Generator] = None) -> dict[str, Kernel]:
    """Non-oracle kernels keyed by name.  GSPC uses random valid tiles when ``tile_rng`` is given."""
    def run_gspc(x, w, params):
        tiles = random_tiles(params, tile_rng) if tile_rng is not None else default_tiles(params, simd_lanes)
        return gspc.gspc_conv(x, w, params, tiles)

    return {
        "gspc": run_gspc,
        "direct": baselines.grouped_direct_conv_timed,
        "im2col": baselines.im2col_grouped_conv,
    }


@dataclass
class VerifyFailure:
    kernel: str
    where: str
    max_rel_error: float


@dataclass
class VerifySummary:
    cases: int
    max_rel: dict[str, float]
    failures: list[VerifyFailure]

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_cases(cases: Iterable[tuple[str, LayerSpec]], kernels: dict[str, Kernel], seed: int = 0,
                 rtol: float = RTOL, atol: float = ATOL) -> VerifySummary:
    max_rel = {name: 0.0 for name in kernels}
    failures = []
    count = 0
    for where, layer in cases:
        count += 1
        x, w = tuner.layer_data(layer, seed + count)
        ref = direct_grouped_conv(x, w, layer.params)
        for name, fn in kernels.items():
            y = fn(x, w, layer.params)
            if y.shape != ref.shape:
                failures.append(VerifyFailure(name, f"{where} (shape {y.shape} != {ref.shape})", float("inf")))
                continue
            err = max_rel_error(y, ref)
            max_rel[name] = max(max_rel[name], err)
            if not allclose(y, ref, rtol, atol):
                failures.append(VerifyFailure(name, where, err))
    return VerifySummary(count, max_rel, failures)


def verify_network_cases(nets: Iterable[NetworkSpec]) -> list[tuple[str, LayerSpec]]:
    """One case per distinct layer shape, labelled with its first occurrence."""
    seen = set()
    cases = []
    for net in nets:
        for i, layer in enumerate(net.layers):
            if layer.key() in seen:
                continue
            seen.add(layer.key())
            cases.append((f"{net.name} {net.variant} layer {i} [{layer.key()}]", layer))
    return cases


def run_verify(config: BenchConfig, kernels: Optional[dict[str, Kernel]] = None) -> VerifySummary:
    if kernels is None:
        reg = kernel_registry(config.simd_lanes, np.random.default_rng(config.seed))
        kernels = {k: reg[k] for k in config.kernels}
    cases = [(f"suite case {i} [{layer.key()}]", layer)
             for i, layer in enumerate(random_suite(config.suite_size, config.seed))]
    cases += verify_network_cases(config.networks())
    return verify_cases(cases, kernels, config.seed)


# -- benchmarking -----------------------------------------------------------

def tunable_layers(net: NetworkSpec) -> list[tuple[int, LayerSpec]]:
    """Layers the tuner covers: the grouped ones, or the standard ones in a network without groups."""
    kind = "grouped" if any(l.kind == "grouped" for l in net.layers) else "standard"
    return [(i, l) for i, l in enumerate(net.layers) if l.kind == kind]


def record_path(record_dir: Path, layer: LayerSpec) -> Path:
    return record_dir / f"{layer.key()}.json"


def tiles_for(layer: LayerSpec, config: BenchConfig, warnings: list[str],
              cache: dict[str, TileConfig], expect_record: bool = True) -> TileConfig:
    key = layer.key()
    if key in cache:
        return cache[key]
    tiles = default_tiles(layer.params, config.simd_lanes)
    if config.tuned:
        path = record_path(config.records(), layer)
        if path.exists():
            try:
                rec = tuner.load_record(path, key)
                tiles = rec.best.tiles
                if rec.platform_tag != tuner.platform_tag():
                    warnings.append(f"record {path.name} was tuned on {rec.platform_tag!r}")
            except RecordError as exc:
                warnings.append(f"unusable tuning record for {key} ({exc}); using default tiles")
        elif expect_record:
            warnings.append(f"no tuning record for {key}; using default tiles {tiles.label()}")
    cache[key] = tiles
    return tiles


def _pack_ms(w, params, tiles, reps) -> float:
    samples = tuner.time_callable(lambda: gspc.pack_kernels(w, params, tiles), reps, 1)
    return statistics.median(samples) / 1e6


@dataclass
class _Task:
    """One distinct (kernel, layer shape, tiles) measurement, shared by every row that needs it."""
    run: Callable[[], np.ndarray]
    checksum: str
    pack_ms: Optional[float]
    samples: list[int] = field(default_factory=list)


def _collect_tasks(nets: Sequence[NetworkSpec], config: BenchConfig, warnings: list[str]):
    tiles_cache: dict = {}
    plan, tasks = [], {}
    for net in nets:
        tunable = {i for i, _ in tunable_layers(net)}
        for kernel in config.kernels:
            entries = []
            for i, layer in enumerate(net.layers):
                tiles = None
                if kernel == "gspc":
                    tiles = tiles_for(layer, config, warnings, tiles_cache, i in tunable)
                key = (kernel, layer.key(), tiles)
                if key not in tasks:
                    x, w = tuner.layer_data(layer, config.seed)
                    run = tuner.prepare(kernel, layer, tiles, w, config.threads)
                    pack = _pack_ms(w, layer.params, tiles, config.reps) if tiles else None
                    tasks[key] = _Task(lambda run=run, x=x: run(x), tuner.checksum(run(x)), pack)
                entries.append((i, layer, tiles, tasks[key]))
            plan.append((net, kernel, entries))
    by_kernel: dict[str, list[_Task]] = {}
    for (kernel, _, _), task in tasks.items():
        by_kernel.setdefault(kernel, []).append(task)
    return plan, list(by_kernel.values())


def _time_interleaved(tasks: list[_Task], reps: int, warmup: int) -> None:
    # one sample per task per round, so slow drifts in host speed hit every layer alike;
    # short rounds keep a drift from landing on only some of the tasks
    for task in tasks:
        for _ in range(warmup):
            task.run()
    for r in range(reps):
        for task in (tasks if r % 2 == 0 else reversed(tasks)):
            task.samples.append(tuner.time_callable(task.run, 1, 0)[0])


def bench_networks(nets: Sequence[NetworkSpec], config: BenchConfig, warnings: list[str]) -> list[BenchRow]:
    """Time every layer of ``nets`` with each configured kernel.

    Layers with identical shape and tiles are measured once and the result is
    reported for each occurrence.
    """
    plan, groups = _collect_tasks(nets, config, warnings)
    for tasks in groups:
        _time_interleaved(tasks, config.reps, config.warmup)
    rows = []
    for net, kernel, entries in plan:
        net_rows = [BenchRow(
            net.name, net.variant, str(i), kernel,
            tiles.t_o if tiles else None, tiles.t_i if tiles else None, tiles.unroll_kw if tiles else None,
            statistics.median(task.samples) / 1e6, task.pack_ms,
            macs(layer), params_count(layer), checksum=task.checksum)
            for i, layer, tiles, task in entries]
        net_rows.append(BenchRow(
            net.name, net.variant, "TOTAL", kernel, None, None, None,
            sum(r.median_ms for r in net_rows),
            sum(r.weight_pack_ms for r in net_rows) if kernel == "gspc" else None,
            sum(r.macs for r in net_rows), sum(r.params for r in net_rows)))
        rows += net_rows
    return rows


def attach_expected(rows: list[BenchRow], warnings: list[str]) -> None:
    """Fill expected_ms/ratio from the S run of the reference kernel (gspc if present)."""
    kernels = list(dict.fromkeys(r.kernel for r in rows))
    if not kernels:
        return
    ref_kernel = "gspc" if "gspc" in kernels else kernels[0]
    for net_name in dict.fromkeys(r.network for r in rows):
        s_total = next((r for r in rows if r.network == net_name and r.variant == "S"
                        and r.kernel == ref_kernel and r.layer == "TOTAL"), None)
        if s_total is None:
            warnings.append(f"{net_name}: no S-variant {ref_kernel} run in this session; expected_ms left empty")
            continue
        for r in rows:
            if r.network == net_name:
                r.expected_ms = expected_time(s_total.median_ms, s_total.macs, r.macs)
                r.ratio = r.median_ms / r.expected_ms if r.expected_ms else None


def run_bench(config: BenchConfig) -> BenchResult:
    nets = config.networks()
    if not nets:
        raise ConfigurationError("bench needs --network or --layers")
    set_threads(config.threads)
    result = BenchResult([], threads=config.threads)
    if config.threads > 1:
        result.warnings.append(f"threads={config.threads}: timings are not comparable to single-thread methodology")
    result.rows = bench_networks(nets, config, result.warnings)
    attach_expected(result.rows, result.warnings)
    return result


def set_threads(threads: int) -> None:
    if threads > 1:
        import numba
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


# -- tuning -----------------------------------------------------------------

@dataclass
class TuneOutcome:
    written: list[Path]
    skipped: list[Path]


def run_tune(config: BenchConfig, out_dir: Optional[Path] = None) -> TuneOutcome:
    nets = config.networks()
    if not nets:
        raise ConfigurationError("tune needs --network or --layers")
    out_dir = Path(out_dir) if out_dir else config.records()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RecordError(f"cannot create record directory {out_dir}: {exc}") from exc
    written, skipped, done = [], [], set()
    for net in nets:
        for _, layer in tunable_layers(net):
            key = layer.key()
            if key in done:
                continue
            done.add(key)
            path = record_path(out_dir, layer)
            if config.resume and path.exists():
                skipped.append(path)
                continue
            log.info("tuning %s", key)
            rec = tuner.tune(layer, config.strategy, config.budget, config.seed, config.simd_lanes,
                             config.reps, config.warmup, config.seed)
            tuner.save_record(rec, path)
            written.append(path)
    return TuneOutcome(written, skipped)


def variant_order(variant: str) -> int:
    return VARIANTS.index(variant) if variant in VARIANTS else len(VARIANTS)


def merge_summaries(a: VerifySummary, b: VerifySummary) -> VerifySummary:
    max_rel = dict(a.max_rel)
    for k, v in b.max_rel.items():
        max_rel[k] = max(max_rel.get(k, 0.0), v)
    return VerifySummary(a.cases + b.cases, max_rel, a.failures + b.failures)
