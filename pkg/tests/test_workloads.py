import pytest

from published_totals import TOTALS
from gspconv.errors import ConfigurationError, UnknownNetworkError
from gspconv.reference import ConvParams
from gspconv.tensor import PaddingSpec
from gspconv.workloads import (NETWORKS, VARIANTS, LayerSpec, NetworkSpec, builtin_network, expected_time,
                               format_network, load_network_file, macs, network_totals, normalize_variant,
                               parse_network, params_count)


def test_macs_fig3_layer():
    assert macs(LayerSpec(ConvParams(4, 4, 2, 2, groups=2), 2, 2, "grouped")) == 32


def test_macs_halve_when_groups_double():
    for g in (1, 2, 4, 8):
        a = LayerSpec(ConvParams.square(32, 64, 3, 1, 1, groups=g), 16, 16, "grouped")
        b = LayerSpec(ConvParams.square(32, 64, 3, 1, 1, groups=2 * g), 16, 16, "grouped")
        assert 2 * macs(b) == macs(a)


def test_params_count_examples():
    assert params_count(LayerSpec(ConvParams.square(4, 8, 3, 1, 1), 8, 8)) == 288
    assert params_count(LayerSpec(ConvParams.square(4, 8, 3, 1, 1, groups=2), 8, 8, "grouped")) == 144
    assert params_count(LayerSpec(ConvParams(8, 8, 1, 1), 8, 8, "pointwise")) == 64


@pytest.mark.parametrize("name,variant,expected", [
    ("wrn40_2", "S", 2242.26e3),
    ("wrn40_2", "G(N)", 292.22e3),
    ("mobilenet_v2", "G(N)", 3.50e6),
    ("resnet34", "G(2)", 13.22e6),
])
def test_param_totals(name, variant, expected):
    assert network_totals(builtin_network(name, variant)).total_params == pytest.approx(expected, rel=0.02)


@pytest.mark.parametrize("name,variant,expected", [
    ("wrn40_2", "S", 328.30e6),
    ("wrn40_2", "G(16)", 58.80e6),
    ("resnet34", "S", 3.67e9),
    ("mobilenet_v2", "G(N)", 0.31e9),
])
def test_mac_totals(name, variant, expected):
    assert network_totals(builtin_network(name, variant)).total_macs == pytest.approx(expected, rel=0.02)


def test_report_totals_are_sums():
    rep = network_totals(builtin_network("resnet34", "G(4)"))
    assert rep.total_macs == sum(c.total_macs for c in rep.per_layer)
    assert rep.total_params == sum(c.total_params for c in rep.per_layer)
    assert rep.conv_macs == sum(macs(c.layer) for c in rep.per_layer)


@pytest.mark.parametrize("name", NETWORKS)
def test_totals_strictly_decrease(name):
    totals = [network_totals(builtin_network(name, v)) for v in VARIANTS]
    for a, b in zip(totals, totals[1:]):
        assert b.total_macs < a.total_macs
        assert b.conv_macs < a.conv_macs


@pytest.mark.parametrize("name", NETWORKS)
def test_grouped_pairs_cheaper_than_standard(name):
    std = builtin_network(name, "S").layers
    for variant in VARIANTS[1:]:
        layers = builtin_network(name, variant).layers
        i = j = checked = 0
        while i < len(layers):
            layer = layers[i]
            if layer.kind != "grouped":
                assert layer == std[j]
                i, j = i + 1, j + 1
                continue
            original, pw = std[j], layers[i + 1]
            assert original.kind == "standard" and pw.kind == "pointwise"
            if std[j + 1] == pw:
                # the block already ends in this pointwise layer; it is shared by both variants
                assert macs(layer) + macs(pw) < macs(original) + macs(std[j + 1])
                i, j = i + 2, j + 2
            else:
                assert macs(layer) + macs(pw) < macs(original)
                i, j = i + 2, j + 1
            checked += 1
        assert j == len(std) and checked > 0


def test_expected_time():
    assert expected_time(65, 328.30e6, 328.30e6) == 65
    assert round(expected_time(65, 328.30e6, 58.80e6), 2) == 11.64
    assert expected_time(10, 100, 50) == 5
    for bad in ((0, 1, 1), (1, 0, 1), (-1, 1, 1)):
        with pytest.raises(ConfigurationError):
            expected_time(*bad)


def test_unknown_names():
    with pytest.raises(UnknownNetworkError):
        builtin_network("vgg16", "S")
    with pytest.raises(UnknownNetworkError):
        builtin_network("wrn40_2", "G(3)")
    assert normalize_variant("g8") == "G(8)" and normalize_variant("G(N)") == "G(N)"


def test_network_invariant_requires_pointwise_companion():
    layer = LayerSpec(ConvParams.square(8, 8, 3, 1, 1, groups=2), 8, 8, "grouped")
    with pytest.raises(ConfigurationError):
        NetworkSpec("x", "G(2)", [layer])
    pw = LayerSpec(ConvParams(8, 8, 1, 1), 8, 8, "pointwise")
    assert len(NetworkSpec("x", "G(2)", [layer, pw]).layers) == 2


def test_layer_key_and_shape():
    layer = LayerSpec(ConvParams(32, 32, 3, 3, 1, 1, PaddingSpec(1, 1), 2), 32, 32, "grouped")
    assert layer.key() == "n1_ci32_co32_k3x3_s1x1_p1x1_g2_i32x32"
    assert layer.input_shape == (1, 32, 32, 32) and layer.out_hw == (32, 32)
    with pytest.raises(ConfigurationError):
        LayerSpec(ConvParams(4, 4, 5, 5), 3, 3)


def test_network_file_roundtrip(tmp_path):
    net = builtin_network("mobilenet_v2", "G(4)")
    path = tmp_path / "net.txt"
    path.write_text(format_network(net))
    back = load_network_file(path)
    assert back.layers == net.layers and back.name == net.name and back.variant == net.variant


def test_network_file_errors():
    header = "#gspconv-network 1\nkind,c_in,c_out,k_h,k_w,s_h,s_w,pad_h,pad_w,g,in_h,in_w,norm,bias\n"
    with pytest.raises(ConfigurationError, match="fields"):
        parse_network(header + "standard,3,16,3,3\n")
    with pytest.raises(ConfigurationError, match="version"):
        parse_network(header.replace("network 1", "network 9"))
    with pytest.raises(ConfigurationError, match=":3:"):
        parse_network(header + "standard,3,16,3,3,1,1,1,1,2,8,8,0,0\n")


def test_every_builtin_loads():
    for name in NETWORKS:
        for v in VARIANTS:
            net = builtin_network(name, v)
            assert net.name == name and net.variant == v and net.layers
            assert all(layer.n == 1 for layer in net.layers)


def test_published_totals_cover_all_variants():
    assert set(TOTALS) == set(NETWORKS)
    assert all(tuple(TOTALS[n]) == VARIANTS for n in NETWORKS)
