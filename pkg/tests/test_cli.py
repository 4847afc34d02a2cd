import json
import struct

import pytest

from gspconv import bench, cli, report
from gspconv.bench import BenchConfig, BenchRow
from gspconv.gspc import default_tiles, gspc_conv
from gspconv.tensor import save_tensor, random_fill
from gspconv.tuner import load_record
from gspconv.workloads import builtin_network, load_network_file

TINY = """#gspconv-network 1
#network tiny
#variant G(2)
kind,c_in,c_out,k_h,k_w,s_h,s_w,pad_h,pad_w,g,in_h,in_w,norm,bias
standard,3,8,3,3,1,1,1,1,1,8,8,1,0
grouped,8,8,3,3,1,1,1,1,2,8,8,1,0
pointwise,8,8,1,1,1,1,0,0,1,8,8,1,0
grouped,8,8,3,3,1,1,1,1,2,8,8,1,0
pointwise,8,8,1,1,1,1,0,0,1,8,8,1,0
grouped,8,16,3,3,2,2,1,1,2,8,8,1,0
pointwise,16,16,1,1,1,1,0,0,1,4,4,1,0
"""

GOLDEN_HEADER = "network,variant,layer,kernel,t_o,t_i,unroll,median_ms,weight_pack_ms,macs,params,expected_ms,ratio"


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text(TINY)
    return str(path)


def test_verify_network_passes(capsys):
    code = cli.main(["verify", "--network", "wrn40_2", "--variant", "G(8)", "--suite-size", "20"])
    out = capsys.readouterr().out
    assert code == cli.EXIT_OK
    for k in ("gspc", "direct", "im2col"):
        assert f"  {k}" in out


def test_verify_g1_suite(tiny):
    config = BenchConfig(layers_file=tiny, kernels=("gspc", "direct", "im2col"), suite_size=0)
    cases = [(f"case {i}", l) for i, l in enumerate(bench.random_suite(60, 3)) if l.params.groups == 1]
    summary = bench.verify_cases(cases, bench.kernel_registry(), 0)
    assert summary.ok and summary.cases == len(cases) > 0
    assert bench.run_verify(config).ok


def test_verify_corrupted_kernel_names_layer(tiny, capsys):
    def corrupted(x, w, params):
        y = gspc_conv(x, w, params, default_tiles(params)).copy()
        if params.groups > 1:
            y[0, 0, 0, 0] = y[0, -1, 0, 0]  # one wrong index
        return y

    args = cli.build_parser().parse_args(["verify", "--layers", tiny, "--suite-size", "0"])
    code = cli.cmd_verify(args, kernels={"gspc": corrupted})
    out = capsys.readouterr().out
    assert code == cli.EXIT_VERIFY
    assert "FAIL gspc: tiny G(2) layer 1" in out


def test_random_suite_coverage():
    suite = bench.random_suite(200, 0)
    assert len(suite) == 200
    assert {l.params.groups for l in suite} >= {1, 2, 4, 8}
    assert any(l.params.groups == l.params.c_in > 8 for l in suite)
    assert {l.params.k_h for l in suite} == {1, 3}
    assert {l.params.s_h for l in suite} == {1, 2}
    assert {l.params.pad.pad_h for l in suite} == {0, 1}
    assert max(l.params.c_in for l in suite) <= 32 and max(l.params.c_out for l in suite) <= 32


def test_fixture_roundtrip(tmp_path, tiny, capsys):
    fx = tmp_path / "fx"
    assert cli.main(["verify", "--layers", tiny, "--suite-size", "0", "--save-fixtures", str(fx)]) == 0
    # one fixture per distinct layer shape
    assert len(list(fx.glob("*.json"))) == 5
    assert cli.main(["verify", "--layers", tiny, "--suite-size", "0", "--fixtures", str(fx)]) == 0
    # corrupt a reference output: verification against fixtures must now fail
    y = next(fx.glob("*.y.bin"))
    raw = bytearray(y.read_bytes())
    raw[16:20] = struct.pack("<f", 1e6)
    y.write_bytes(bytes(raw))
    capsys.readouterr()
    assert cli.main(["verify", "--layers", tiny, "--suite-size", "0", "--fixtures", str(fx)]) == cli.EXIT_VERIFY
    assert "fixture " in capsys.readouterr().out


def test_bench_rows_and_report(tmp_path, tiny):
    out = tmp_path / "b.csv"
    code = cli.main(["bench", "--layers", tiny, "--kernel", "gspc,direct,im2col", "--reps", "3", "--out", str(out)])
    assert code == 0
    assert out.read_text().splitlines()[0] == GOLDEN_HEADER
    rows = report.read_csv(out)
    assert len(rows) == 3 * 8
    for kernel in ("gspc", "direct", "im2col"):
        layer_rows = [r for r in rows if r.kernel == kernel and r.layer != "TOTAL"]
        total = next(r for r in rows if r.kernel == kernel and r.layer == "TOTAL")
        assert total.median_ms == pytest.approx(sum(r.median_ms for r in layer_rows), rel=1e-12)
        assert total.macs == sum(r.macs for r in layer_rows)
        assert all((r.weight_pack_ms is not None) == (kernel == "gspc") for r in layer_rows)
    assert (tmp_path / "b.summary.txt").exists() and (tmp_path / "b.plot.csv").exists()


def test_csv_and_json_roundtrip(tmp_path):
    rows = [BenchRow("wrn40_2", "G(2)", "0", "gspc", 4, 2, True, 1.25, 0.01, 100, 10, 2.5, 0.5),
            BenchRow("wrn40_2", "G(2)", "TOTAL", "direct", None, None, None, 3.0, None, 100, 10, None, None)]
    report.write_csv(rows, tmp_path / "r.csv")
    assert report.read_csv(tmp_path / "r.csv") == rows
    report.write_json(rows, tmp_path / "r.json")
    assert report.read_json(tmp_path / "r.json") == rows


def test_summary_variant_order():
    rows = [BenchRow("wrn40_2", v, "TOTAL", "gspc", None, None, None, 1.0, None, 1, 1)
            for v in ("G(N)", "G(16)", "S", "G(4)", "G(2)", "G(8)")]
    table = report.summary_table(rows)
    pos = [table.index(f"  {v} ") for v in ("S", "G(2)", "G(4)", "G(8)", "G(16)", "G(N)")]
    assert pos == sorted(pos)
    assert [r.variant for r in report.totals(rows)] == ["S", "G(2)", "G(4)", "G(8)", "G(16)", "G(N)"]


def test_bench_expected_time_needs_s_run(tiny):
    res = bench.run_bench(BenchConfig(layers_file=tiny, reps=3))
    assert any("no S-variant" in w for w in res.warnings)
    assert all(r.expected_ms is None for r in res.rows)


def test_bench_expected_from_s_total():
    res = bench.run_bench(BenchConfig(network="wrn40_2", variants=("S", "G(N)"), reps=3))
    s = next(r for r in res.rows if r.variant == "S" and r.layer == "TOTAL")
    gn = next(r for r in res.rows if r.variant == "G(N)" and r.layer == "TOTAL")
    assert s.expected_ms == pytest.approx(s.median_ms) and s.ratio == pytest.approx(1.0)
    assert gn.expected_ms == pytest.approx(s.median_ms * gn.macs / s.macs)
    assert gn.ratio == pytest.approx(gn.median_ms / gn.expected_ms)
    assert gn.macs < s.macs


def test_bench_checksums_deterministic(tiny):
    a = bench.run_bench(BenchConfig(layers_file=tiny, kernels=("gspc", "direct"), reps=3))
    b = bench.run_bench(BenchConfig(layers_file=tiny, kernels=("gspc", "direct"), reps=3))
    assert [r.checksum for r in a.rows] == [r.checksum for r in b.rows]
    by_layer = {}
    for r in a.rows:
        if r.layer != "TOTAL":
            by_layer.setdefault(r.layer, set()).add(r.checksum)
    assert all(len(s) == 1 for s in by_layer.values())


def test_bench_shares_measurement_of_identical_layers(tiny, monkeypatch):
    calls = []
    real = bench.tuner.prepare
    monkeypatch.setattr(bench.tuner, "prepare", lambda *a, **k: calls.append(a[1].key()) or real(*a, **k))
    res = bench.run_bench(BenchConfig(layers_file=tiny, reps=3))
    assert len(calls) == len(set(calls)) == 5
    ms = {r.layer: r.median_ms for r in res.rows}
    assert ms["1"] == ms["3"] and ms["2"] == ms["4"]


def test_tune_dedupes_and_resumes(tmp_path, tiny, capsys):
    rec = tmp_path / "recs"
    assert cli.main(["tune", "--layers", tiny, "--reps", "3", "--record-dir", str(rec)]) == 0
    net = load_network_file(tiny)
    shapes = {l.key() for l in net.layers if l.kind == "grouped"}
    assert len(shapes) == 2
    assert {p.stem for p in rec.glob("*.json")} == shapes
    capsys.readouterr()
    assert cli.main(["tune", "--layers", tiny, "--reps", "3", "--record-dir", str(rec), "--resume"]) == 0
    out = capsys.readouterr().out
    assert out.count("skipped") == 2 and "wrote" not in out


def test_tune_wrn_g4_record_count(tmp_path, monkeypatch):
    monkeypatch.setenv("GSPC_RECORD_DIR", str(tmp_path))
    assert cli.main(["tune", "--network", "wrn40_2", "--variant", "G(4)", "--reps", "3",
                     "--strategy", "random", "--budget", "8"]) == 0
    net = builtin_network("wrn40_2", "G(4)")
    shapes = {l.key() for l in net.layers if l.kind == "grouped"}
    files = list(tmp_path.glob("*.json"))
    assert len(files) == len(shapes)
    for f in files:
        assert len(load_record(f).all_trials) <= 9


def test_tuned_bench_uses_records(tmp_path, tiny):
    rec = tmp_path / "recs"
    cli.main(["tune", "--layers", tiny, "--reps", "3", "--record-dir", str(rec)])
    res = bench.run_bench(BenchConfig(layers_file=tiny, tuned=True, reps=3, record_dir=str(rec)))
    assert not any("no tuning record" in w for w in res.warnings)
    for f in rec.glob("*.json"):
        best = load_record(f).best.tiles
        assert any((r.t_o, r.t_i, r.unroll) == (best.t_o, best.t_i, best.unroll_kw) for r in res.rows)
    res = bench.run_bench(BenchConfig(layers_file=tiny, tuned=True, reps=3, record_dir=str(tmp_path / "none")))
    assert sum("no tuning record" in w for w in res.warnings) == 2


def test_report_subcommand(tmp_path, tiny):
    src = tmp_path / "b.json"
    assert cli.main(["bench", "--layers", tiny, "--reps", "3", "--out", str(src), "--format", "json"]) == 0
    assert json.loads(src.read_text())["rows"]
    assert cli.main(["report", str(src)]) == 0
    assert (tmp_path / "b.report.csv").read_text().splitlines()[0] == GOLDEN_HEADER
    assert (tmp_path / "b.report.plot.csv").read_text().startswith("network,variant,kernel,measured_ms,expected_ms")


def test_pack_subcommand(tmp_path):
    w = random_fill((8, 2, 3, 3), 1)
    save_tensor(w, tmp_path / "w.bin")
    out = tmp_path / "w.gspk"
    assert cli.main(["pack", "--weights", str(tmp_path / "w.bin"), "--groups", "4", "--t-o", "2",
                     "--t-i", "2", "--out", str(out)]) == 0
    assert struct.unpack("<7I", out.read_bytes()[:28]) == (4, 1, 1, 3, 3, 2, 2)
    assert cli.main(["pack", "--weights", str(tmp_path / "w.bin"), "--groups", "4", "--t-o", "3",
                     "--out", str(out)]) == cli.EXIT_CONFIG
    assert cli.main(["pack", "--network", "wrn40_2", "--variant", "G(8)", "--layer", "1",
                     "--out", str(out)]) == 0


@pytest.mark.parametrize("argv,code", [
    (["bench", "--network", "wrn40_2", "--reps", "2"], cli.EXIT_CONFIG),
    (["bench"], cli.EXIT_CONFIG),
    (["bench", "--network", "wrn40_2", "--variant", "G(3)"], cli.EXIT_CONFIG),
    (["bench", "--network", "wrn40_2", "--kernel", "winograd"], cli.EXIT_CONFIG),
    (["report", "/nonexistent/rows.csv"], cli.EXIT_IO),
    (["pack", "--network", "wrn40_2"], cli.EXIT_CONFIG),
])
def test_exit_codes(argv, code, capsys):
    assert cli.main(argv) == code
    assert "error:" in capsys.readouterr().err


def test_unwritable_output_is_io_error(tiny):
    assert cli.main(["bench", "--layers", tiny, "--reps", "3", "--out", "/nonexistent/dir/b.csv"]) == cli.EXIT_IO


def test_tune_error_exit(monkeypatch, tiny, tmp_path):
    import gspconv.tuner as tuner_mod
    monkeypatch.setattr(tuner_mod, "oracle_checksum", lambda layer, seed=0: "0" * 16)
    assert cli.main(["tune", "--layers", tiny, "--reps", "3", "--record-dir", str(tmp_path)]) == cli.EXIT_TUNING


def test_threads_flag_warns(tiny):
    res = bench.run_bench(BenchConfig(layers_file=tiny, reps=3, threads=2))
    assert any("not comparable" in w for w in res.warnings)


def test_bad_csv_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(Exception, match="not a bench CSV"):
        report.read_csv(p)
