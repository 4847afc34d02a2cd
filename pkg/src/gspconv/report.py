"""Bench report emission: CSV/JSON rows, a per-variant summary table and plot data."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Optional, Union

from .bench import BenchRow, variant_order
from .errors import ConfigurationError

CSV_COLUMNS = ("network", "variant", "layer", "kernel", "t_o", "t_i", "unroll", "median_ms",
               "weight_pack_ms", "macs", "params", "expected_ms", "ratio")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: Iterable[BenchRow], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])


def _opt(cast, s: str):
    return None if s == "" else cast(s)


def read_csv(path: Union[str, Path]) -> list[BenchRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ConfigurationError(f"{path}: not a bench CSV (header {header})")
        rows = []
        for rec in reader:
            d = dict(zip(CSV_COLUMNS, rec))
            rows.append(BenchRow(
                d["network"], d["variant"], d["layer"], d["kernel"],
                _opt(int, d["t_o"]), _opt(int, d["t_i"]), _opt(lambda s: s == "1", d["unroll"]),
                float(d["median_ms"]), _opt(float, d["weight_pack_ms"]),
                int(d["macs"]), int(d["params"]),
                _opt(float, d["expected_ms"]), _opt(float, d["ratio"])))
    return rows


def write_json(rows: Iterable[BenchRow], path: Union[str, Path], warnings: Optional[list[str]] = None) -> None:
    doc = {"rows": [{c: getattr(r, c) for c in CSV_COLUMNS + ("checksum",)} for r in rows],
           "warnings": list(warnings or [])}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_json(path: Union[str, Path]) -> list[BenchRow]:
    doc = json.loads(Path(path).read_text())
    return [BenchRow(**{c: d.get(c) for c in CSV_COLUMNS + ("checksum",) if c in d}) for d in doc["rows"]]


def read_rows(path: Union[str, Path]) -> list[BenchRow]:
    return read_json(path) if str(path).endswith(".json") else read_csv(path)


def totals(rows: Iterable[BenchRow]) -> list[BenchRow]:
    """TOTAL rows ordered by network, then variant (S, G(2), ..., G(N)), then kernel."""
    tot = [r for r in rows if r.layer == "TOTAL"]
    return sorted(tot, key=lambda r: (r.network, variant_order(r.variant), r.kernel))


def summary_table(rows: Iterable[BenchRow]) -> str:
    tot = totals(rows)
    kernels = list(dict.fromkeys(r.kernel for r in tot))
    lines = []
    for net in dict.fromkeys(r.network for r in tot):
        lines.append(f"{net}")
        head = f"  {'variant':<8}{'MACs':>14}" + "".join(f"{k + ' ms':>14}{'ratio':>8}" for k in kernels)
        lines.append(head + f"{'expected ms':>14}")
        for variant in dict.fromkeys(r.variant for r in tot if r.network == net):
            by_k = {r.kernel: r for r in tot if r.network == net and r.variant == variant}
            any_row = next(iter(by_k.values()))
            cells = ""
            for k in kernels:
                r = by_k.get(k)
                cells += f"{r.median_ms:>14.3f}" if r else f"{'-':>14}"
                cells += f"{r.ratio:>8.2f}" if r and r.ratio is not None else f"{'-':>8}"
            exp = any_row.expected_ms
            lines.append(f"  {variant:<8}{any_row.macs:>14,}{cells}"
                         + (f"{exp:>14.3f}" if exp is not None else f"{'-':>14}"))
    return "\n".join(lines) + "\n"


def write_plot_data(rows: Iterable[BenchRow], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("network", "variant", "kernel", "measured_ms", "expected_ms"))
        for r in totals(rows):
            writer.writerow((r.network, r.variant, r.kernel, _cell(r.median_ms), _cell(r.expected_ms)))


def emit(rows: list[BenchRow], out: Union[str, Path], fmt: str = "csv",
         warnings: Optional[list[str]] = None) -> dict[str, Path]:
    """Write rows plus ``<stem>.summary.txt`` and ``<stem>.plot.csv`` next to ``out``."""
    out = Path(out)
    if fmt == "csv":
        write_csv(rows, out)
    elif fmt == "json":
        write_json(rows, out, warnings)
    else:
        raise ConfigurationError(f"unknown format {fmt!r}")
    summary = out.with_name(out.stem + ".summary.txt")
    summary.write_text(summary_table(rows))
    plot = out.with_name(out.stem + ".plot.csv")
    write_plot_data(rows, plot)
    return {"rows": out, "summary": summary, "plot": plot}
