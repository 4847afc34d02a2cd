"""Regenerate the shipped layer tables under src/gspconv/data/networks/.

Architectures follow their standard published definitions: WRN-40-2 on
32x32 inputs, ResNet-34 and MobileNetV2 on 224x224.  In a G(g) variant each
3x3 convolution of a residual block becomes a g-group 3x3 convolution over
its input channels followed by a 1x1 convolution to the block's output
width.  MobileNetV2's 3x3 convolutions are already followed by a 1x1
projection, so only their group count changes (S = dense, G(N) = depthwise).

Every convolution except the classifier is followed by a batch norm.  The
classifier is a 1x1 convolution on a 1x1 input with a bias.

    python tools/gen_networks.py
"""

from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "gspconv" / "data" / "networks"

VARIANTS = ["S", "G(2)", "G(4)", "G(8)", "G(16)", "G(N)"]

TOP1 = {
    "wrn40_2": [4.79, 4.87, 5.00, 5.05, 5.13, 6.57],
    "resnet34": [26.73, 26.13, 26.58, 27.24, 27.99, 30.16],
    "mobilenet_v2": [26.03, 25.90, 26.34, 26.84, 27.06, 28.20],
}

COLUMNS = "kind,c_in,c_out,k_h,k_w,s_h,s_w,pad_h,pad_w,g,in_h,in_w,norm,bias"


def out_dim(h, k, s, p):
    return (h + 2 * p - k) // s + 1


def conv(kind, c_in, c_out, k, s, p, g, h, norm=1, bias=0):
    return (kind, c_in, c_out, k, k, s, s, p, p, g, h, h, norm, bias)


def groups_for(variant, c_in):
    if variant == "G(N)":
        return c_in
    return int(variant[2:-1])


def block_conv(variant, c_in, c_out, stride, h):
    if variant == "S":
        return [conv("standard", c_in, c_out, 3, stride, 1, 1, h)]
    g = groups_for(variant, c_in)
    return [conv("grouped", c_in, c_in, 3, stride, 1, g, h),
            conv("pointwise", c_in, c_out, 1, 1, 0, 1, out_dim(h, 3, stride, 1))]


def wrn40_2(variant):
    layers = [conv("standard", 3, 16, 3, 1, 1, 1, 32)]
    h, c_in = 32, 16
    for width, stride in ((32, 1), (64, 2), (128, 2)):
        for b in range(6):
            s = stride if b == 0 else 1
            layers += block_conv(variant, c_in, width, s, h)
            h2 = out_dim(h, 3, s, 1)
            layers += block_conv(variant, width, width, 1, h2)
            if b == 0:
                layers.append(conv("standard", c_in, width, 1, s, 0, 1, h))
            h, c_in = h2, width
    layers.append(conv("pointwise", 128, 10, 1, 1, 0, 1, 1, norm=0, bias=1))
    return layers


def resnet34(variant):
    layers = [conv("standard", 3, 64, 7, 2, 3, 1, 224)]
    h, c_in = 56, 64  # after the 3x3/2 max pool
    for width, n, stride in ((64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)):
        for b in range(n):
            s = stride if b == 0 else 1
            layers += block_conv(variant, c_in, width, s, h)
            h2 = out_dim(h, 3, s, 1)
            layers += block_conv(variant, width, width, 1, h2)
            if s != 1 or c_in != width:
                layers.append(conv("standard", c_in, width, 1, s, 0, 1, h))
            h, c_in = h2, width
    layers.append(conv("pointwise", 512, 1000, 1, 1, 0, 1, 1, norm=0, bias=1))
    return layers


def mobilenet_v2(variant):
    layers = [conv("standard", 3, 32, 3, 2, 1, 1, 224)]
    h, c_in = 112, 32
    for t, c, n, s0 in ((1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2),
                        (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)):
        for b in range(n):
            s = s0 if b == 0 else 1
            hidden = c_in * t
            if t != 1:
                layers.append(conv("pointwise", c_in, hidden, 1, 1, 0, 1, h))
            if variant == "S":
                layers.append(conv("standard", hidden, hidden, 3, s, 1, 1, h))
            else:
                layers.append(conv("grouped", hidden, hidden, 3, s, 1, groups_for(variant, hidden), h))
            h = out_dim(h, 3, s, 1)
            layers.append(conv("pointwise", hidden, c, 1, 1, 0, 1, h))
            c_in = c
    layers.append(conv("pointwise", 320, 1280, 1, 1, 0, 1, h))
    layers.append(conv("pointwise", 1280, 1000, 1, 1, 0, 1, 1, norm=0, bias=1))
    return layers


def file_name(name, variant):
    tag = variant.replace("(", "").replace(")", "")
    return f"{name}_{tag}.txt"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, build in (("wrn40_2", wrn40_2), ("resnet34", resnet34), ("mobilenet_v2", mobilenet_v2)):
        for variant, top1 in zip(VARIANTS, TOP1[name]):
            lines = ["#gspconv-network 1", f"#network {name}", f"#variant {variant}",
                     f"#top1 {top1}", COLUMNS]
            lines += [",".join(str(v) for v in row) for row in build(variant)]
            (OUT / file_name(name, variant)).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
