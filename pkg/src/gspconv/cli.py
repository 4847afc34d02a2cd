"""``gspconv`` command line: verify | bench | tune | report | pack.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 I/O error, 4 tuning error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bench, fixtures, report
from .errors import ConfigurationError, GSPCError, RecordError, TuningError, UnknownNetworkError
from .gspc import TileConfig, default_tiles, pack_kernels, save_packed_kernels, validate_tiles
from .reference import ConvParams
from .tensor import load_tensor, random_fill
from .workloads import VARIANTS, builtin_network

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TUNING = 4

log = logging.getLogger("gspconv")


def _variants(text: str) -> list[str]:
    if text.strip().lower() == "all":
        return list(VARIANTS)
    return [v for v in (s.strip() for s in text.split(",")) if v]


def _kernels(text: str) -> list[str]:
    return [k for k in (s.strip() for s in text.split(",")) if k]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", choices=("wrn40_2", "resnet34", "mobilenet_v2"))
    common.add_argument("--variant", default="S", type=_variants,
                        help="variant, comma list or 'all' (S, G(2), G(4), G(8), G(16), G(N))")
    common.add_argument("--layers", dest="layers_file", help="network table file instead of --network")
    common.add_argument("--kernel", dest="kernels", type=_kernels, default=None,
                        help="comma list of gspc, direct, im2col")
    tuned = common.add_mutually_exclusive_group()
    tuned.add_argument("--tuned", dest="tuned", action="store_true", default=False)
    tuned.add_argument("--default", dest="tuned", action="store_false")
    common.add_argument("--reps", type=int, default=5)
    common.add_argument("--warmup", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--simd-lanes", type=int, default=8)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--record-dir", help="tuning-record directory (default $GSPC_RECORD_DIR or ./gspc_records)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gspconv", description="Grouped spatial pack convolution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common], help="check kernels against the reference convolution")
    p.add_argument("--suite-size", type=int, default=200)
    p.add_argument("--fixtures", help="also verify tensor fixtures found in this directory")
    p.add_argument("--save-fixtures", help="write the network cases as tensor fixtures into this directory")

    sub.add_parser("bench", parents=[common], help="time kernels per layer and per network")

    p = sub.add_parser("tune", parents=[common], help="search tile sizes per distinct layer shape")
    p.add_argument("--strategy", choices=("exhaustive", "random"), default="exhaustive")
    p.add_argument("--budget", type=int)
    p.add_argument("--resume", action="store_true", help="skip shapes that already have a record")

    p = sub.add_parser("report", help="summary table and plot data from a bench output file")
    p.add_argument("input", help="bench output (.csv or .json)")
    p.add_argument("--out", help="output path stem (default: next to the input)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("pack", parents=[common], help="pack kernels ahead of time into a 7D file")
    p.add_argument("--weights", help="weight tensor fixture (C_out, C_in/g, K_h, K_w)")
    p.add_argument("--groups", type=int, default=1)
    p.add_argument("--layer", type=int, help="layer index of --network/--variant to pack (seeded weights)")
    p.add_argument("--t-o", type=int)
    p.add_argument("--t-i", type=int)
    p.add_argument("--unroll-kw", action="store_true")
    return parser


def _config(args, kernels_default=("gspc",)) -> bench.BenchConfig:
    return bench.BenchConfig(
        network=args.network, variants=args.variant, layers_file=args.layers_file,
        kernels=args.kernels or list(kernels_default), tuned=args.tuned, reps=args.reps,
        warmup=args.warmup, seed=args.seed, simd_lanes=args.simd_lanes, threads=args.threads,
        out=args.out, format=args.format, record_dir=args.record_dir,
        strategy=getattr(args, "strategy", "exhaustive"), budget=getattr(args, "budget", None),
        resume=getattr(args, "resume", False), suite_size=getattr(args, "suite_size", 200))


def cmd_verify(args, kernels=None) -> int:
    config = _config(args, kernels_default=("gspc", "direct", "im2col"))
    summary = bench.run_verify(config, kernels)
    if args.fixtures:
        fx = fixtures.verify_fixture_dir(args.fixtures, kernels or bench.kernel_registry(config.simd_lanes))
        summary = bench.merge_summaries(summary, fx)
    if args.save_fixtures:
        n = fixtures.save_fixtures(bench.verify_network_cases(config.networks()), args.save_fixtures, config.seed)
        print(f"wrote {n} fixtures to {args.save_fixtures}")
    print(f"verified {summary.cases} cases (rtol={bench.RTOL:g}, atol={bench.ATOL:g})")
    for name, err in summary.max_rel.items():
        bad = sum(1 for f in summary.failures if f.kernel == name)
        print(f"  {name:<8} max rel error {err:.3e}  {'FAIL' if bad else 'ok'}" + (f" ({bad} failing)" if bad else ""))
    for f in summary.failures[:20]:
        print(f"FAIL {f.kernel}: {f.where} (max rel error {f.max_rel_error:.3e})")
    return EXIT_OK if summary.ok else EXIT_VERIFY


def cmd_bench(args) -> int:
    config = _config(args)
    result = bench.run_bench(config)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if config.out:
        paths = report.emit(result.rows, config.out, config.format, result.warnings)
        print(f"wrote {', '.join(str(p) for p in paths.values())}")
    print(report.summary_table(result.rows), end="")
    return EXIT_OK


def cmd_tune(args) -> int:
    config = _config(args)
    outcome = bench.run_tune(config, Path(args.out) if args.out else None)
    for p in outcome.written:
        print(f"wrote {p}")
    for p in outcome.skipped:
        print(f"skipped {p} (exists)")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = report.read_rows(args.input)
    src = Path(args.input)
    out = Path(args.out) if args.out else src.with_name(f"{src.stem}.report.{args.format}")
    paths = report.emit(rows, out, args.format)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    print(report.summary_table(rows), end="")
    return EXIT_OK


def cmd_pack(args) -> int:
    if args.weights:
        w = load_tensor(args.weights)
        c_out, cpg, k_h, k_w = w.shape
        params = ConvParams(cpg * args.groups, c_out, k_h, k_w, groups=args.groups)
    elif args.network is not None and args.layer is not None:
        net = builtin_network(args.network, args.variant[0])
        if not 0 <= args.layer < len(net.layers):
            raise ConfigurationError(f"layer index {args.layer} out of range [0, {len(net.layers)})")
        params = net.layers[args.layer].params
        w = random_fill(params.weight_shape, args.seed + 1)
    else:
        raise ConfigurationError("pack needs --weights or --network with --layer")
    tiles = default_tiles(params, args.simd_lanes)
    tiles = TileConfig(args.t_o or tiles.t_o, args.t_i or tiles.t_i, args.unroll_kw)
    validate_tiles(params, tiles)
    if not args.out:
        raise ConfigurationError("pack needs --out")
    packed = pack_kernels(w, params, tiles)
    save_packed_kernels(packed, args.out)
    print(f"wrote {args.out} dims={packed.dims}")
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "bench": cmd_bench, "tune": cmd_tune, "report": cmd_report, "pack": cmd_pack}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TuningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TUNING
    except (RecordError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, UnknownNetworkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GSPCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
