"""Network layer tables, MAC/parameter cost model and expected-time extrapolation.

Network files are comma-separated text::

    #gspconv-network 1
    #network wrn40_2
    #variant G(8)
    #top1 5.05
    kind,c_in,c_out,k_h,k_w,s_h,s_w,pad_h,pad_w,g,in_h,in_w,norm,bias
    standard,3,16,3,3,1,1,1,1,1,32,32,1,0
    ...

``norm`` marks a convolution followed by batch normalization (two affine
parameters per channel and one multiply-add per output element) and ``bias``
a convolution with a bias vector.  Those costs are reported separately from
the convolution's own MACs and parameters and are included in network totals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigurationError, UnknownNetworkError
from .reference import ConvParams
from .tensor import PaddingSpec, output_spatial_dims

FORMAT_VERSION = 1

NETWORKS = ("wrn40_2", "resnet34", "mobilenet_v2")
VARIANTS = ("S", "G(2)", "G(4)", "G(8)", "G(16)", "G(N)")
KINDS = ("standard", "grouped", "pointwise")

COLUMNS = ("kind", "c_in", "c_out", "k_h", "k_w", "s_h", "s_w", "pad_h", "pad_w",
           "g", "in_h", "in_w", "norm", "bias")


@dataclass(frozen=True)
class LayerSpec:
    params: ConvParams
    in_h: int
    in_w: int
    kind: str = "standard"
    n: int = 1
    norm: bool = False
    bias: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.n < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {self.n}")
        output_spatial_dims(self.params, self.in_h, self.in_w)

    @property
    def out_hw(self) -> tuple[int, int]:
        return output_spatial_dims(self.params, self.in_h, self.in_w)

    @property
    def input_shape(self) -> tuple[int, int, int, int]:
        return (self.n, self.params.c_in, self.in_h, self.in_w)

    def key(self) -> str:
        """Canonical shape string; identical convolutions share a key."""
        p = self.params
        return (f"n{self.n}_ci{p.c_in}_co{p.c_out}_k{p.k_h}x{p.k_w}_s{p.s_h}x{p.s_w}"
                f"_p{p.pad.pad_h}x{p.pad.pad_w}_g{p.groups}_i{self.in_h}x{self.in_w}")


@dataclass
class NetworkSpec:
    name: str
    variant: str
    layers: list[LayerSpec]
    top1: Optional[float] = None

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.kind == "grouped":
                nxt = self.layers[i + 1] if i + 1 < len(self.layers) else None
                if nxt is None or nxt.kind != "pointwise":
                    raise ConfigurationError(
                        f"{self.name} {self.variant}: grouped layer {i} is not followed by a pointwise layer"
                    )


@dataclass(frozen=True)
class LayerCost:
    layer: LayerSpec
    macs: int
    params: int
    norm_macs: int = 0
    extra_params: int = 0

    @property
    def total_macs(self) -> int:
        return self.macs + self.norm_macs

    @property
    def total_params(self) -> int:
        return self.params + self.extra_params


@dataclass
class MacsReport:
    per_layer: list[LayerCost]
    total_macs: int
    total_params: int
    conv_macs: int
    expected_ms: Optional[float] = None
    name: str = ""
    variant: str = ""


def macs(layer: LayerSpec) -> int:
    p = layer.params
    h_out, w_out = layer.out_hw
    return layer.n * p.c_in * p.c_out * p.k_h * p.k_w * h_out * w_out // p.groups


def params_count(layer: LayerSpec) -> int:
    p = layer.params
    if layer.kind == "pointwise":
        return p.c_out * p.c_in
    return p.c_out * (p.c_in // p.groups) * p.k_h * p.k_w


def layer_cost(layer: LayerSpec) -> LayerCost:
    h_out, w_out = layer.out_hw
    c_out = layer.params.c_out
    norm_macs = layer.n * c_out * h_out * w_out if layer.norm else 0
    extra = (2 * c_out if layer.norm else 0) + (c_out if layer.bias else 0)
    return LayerCost(layer, macs(layer), params_count(layer), norm_macs, extra)


def network_totals(net: NetworkSpec) -> MacsReport:
    costs = [layer_cost(layer) for layer in net.layers]
    return MacsReport(
        per_layer=costs,
        total_macs=sum(c.total_macs for c in costs),
        total_params=sum(c.total_params for c in costs),
        conv_macs=sum(c.macs for c in costs),
        name=net.name,
        variant=net.variant,
    )


def expected_time(s_time_ms: float, s_macs: float, target_macs: float) -> float:
    """Scale a measured time by a MAC ratio (one MAC costs ``s_time_ms / s_macs``)."""
    if s_time_ms <= 0 or s_macs <= 0:
        raise ConfigurationError(f"reference time and MACs must be positive, got {s_time_ms}, {s_macs}")
    return s_time_ms * target_macs / s_macs


def variant_tag(variant: str) -> str:
    return variant.replace("(", "").replace(")", "")


def normalize_variant(variant: str) -> str:
    v = variant.strip().upper()
    for known in VARIANTS:
        if v in (known, variant_tag(known)):
            return known
    raise UnknownNetworkError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")


def parse_network(text: str, source: str = "<string>") -> NetworkSpec:
    meta: dict[str, str] = {}
    rows: list[LayerSpec] = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(" ")
            meta[key] = value.strip()
            continue
        fields = [f.strip() for f in line.split(",")]
        if not header_seen:
            if tuple(fields) != COLUMNS:
                raise ConfigurationError(f"{source}:{lineno}: expected column header {','.join(COLUMNS)}")
            header_seen = True
            continue
        if len(fields) != len(COLUMNS):
            raise ConfigurationError(f"{source}:{lineno}: expected {len(COLUMNS)} fields, got {len(fields)}")
        try:
            kind = fields[0]
            c_in, c_out, k_h, k_w, s_h, s_w, pad_h, pad_w, g, in_h, in_w, norm, bias = map(int, fields[1:])
            params = ConvParams(c_in, c_out, k_h, k_w, s_h, s_w, PaddingSpec(pad_h, pad_w), g)
            rows.append(LayerSpec(params, in_h, in_w, kind, 1, bool(norm), bool(bias)))
        except (ValueError, ConfigurationError) as exc:
            raise ConfigurationError(f"{source}:{lineno}: {exc}") from None
    version = meta.get("gspconv-network")
    if version != str(FORMAT_VERSION):
        raise ConfigurationError(f"{source}: unsupported network file version {version!r}")
    top1 = meta.get("top1")
    return NetworkSpec(meta.get("network", Path(source).stem), meta.get("variant", "S"), rows,
                       float(top1) if top1 else None)


def load_network_file(path: Union[str, Path]) -> NetworkSpec:
    return parse_network(Path(path).read_text(), str(path))


def format_network(net: NetworkSpec) -> str:
    lines = [f"#gspconv-network {FORMAT_VERSION}", f"#network {net.name}", f"#variant {net.variant}"]
    if net.top1 is not None:
        lines.append(f"#top1 {net.top1}")
    lines.append(",".join(COLUMNS))
    for layer in net.layers:
        p = layer.params
        lines.append(",".join(str(v) for v in (
            layer.kind, p.c_in, p.c_out, p.k_h, p.k_w, p.s_h, p.s_w, p.pad.pad_h, p.pad.pad_w,
            p.groups, layer.in_h, layer.in_w, int(layer.norm), int(layer.bias))))
    return "\n".join(lines) + "\n"


def builtin_network(name: str, variant: str) -> NetworkSpec:
    if name not in NETWORKS:
        raise UnknownNetworkError(f"unknown network {name!r}; expected one of {', '.join(NETWORKS)}")
    variant = normalize_variant(variant)
    res = resources.files("gspconv") / "data" / "networks" / f"{name}_{variant_tag(variant)}.txt"
    return parse_network(res.read_text(), f"{name}_{variant_tag(variant)}.txt")
