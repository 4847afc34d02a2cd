"""Tensor fixture sets for ``gspconv verify``.

A fixture named ``case`` is four files in one directory: ``case.json``
(layer parameters), ``case.x.bin`` and ``case.w.bin`` (input and weights) and
``case.y.bin`` (reference output).  Tensor files use the binary layout of
:func:`gspconv.tensor.save_tensor`.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Union

from .errors import ConfigurationError
from .reference import ConvParams, direct_grouped_conv
from .tensor import PaddingSpec, allclose, load_tensor, max_rel_error, save_tensor
from .workloads import LayerSpec


def layer_to_dict(layer: LayerSpec) -> dict:
    p = layer.params
    return {"kind": layer.kind, "n": layer.n, "c_in": p.c_in, "c_out": p.c_out, "k_h": p.k_h, "k_w": p.k_w,
            "s_h": p.s_h, "s_w": p.s_w, "pad_h": p.pad.pad_h, "pad_w": p.pad.pad_w, "g": p.groups,
            "in_h": layer.in_h, "in_w": layer.in_w}


def layer_from_dict(d: dict) -> LayerSpec:
    try:
        params = ConvParams(d["c_in"], d["c_out"], d["k_h"], d["k_w"], d["s_h"], d["s_w"],
                            PaddingSpec(d["pad_h"], d["pad_w"]), d["g"])
        return LayerSpec(params, d["in_h"], d["in_w"], d.get("kind", "standard"), d.get("n", 1))
    except KeyError as exc:
        raise ConfigurationError(f"fixture is missing field {exc}") from None


def save_fixtures(cases: Iterable[tuple[str, LayerSpec]], directory: Union[str, Path], seed: int = 0) -> int:
    from .tuner import layer_data

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    count = 0
    for i, (_, layer) in enumerate(cases):
        x, w = layer_data(layer, seed + i)
        stem = directory / f"case{i:04d}"
        stem.with_suffix(".json").write_text(json.dumps(layer_to_dict(layer)) + "\n")
        save_tensor(x, f"{stem}.x.bin")
        save_tensor(w, f"{stem}.w.bin")
        save_tensor(direct_grouped_conv(x, w, layer.params), f"{stem}.y.bin")
        count += 1
    return count


def verify_fixture_dir(directory: Union[str, Path], kernels: dict, rtol: float = 1e-5, atol: float = 1e-6):
    from .bench import VerifyFailure, VerifySummary

    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(f"fixture directory {directory} does not exist")
    max_rel = {name: 0.0 for name in ("oracle", *kernels)}
    failures = []
    cases = sorted(directory.glob("*.json"))
    for meta in cases:
        layer = layer_from_dict(json.loads(meta.read_text()))
        stem = meta.with_suffix("")
        x, w, y = (load_tensor(f"{stem}.{s}.bin") for s in ("x", "w", "y"))
        outputs = {"oracle": direct_grouped_conv(x, w, layer.params)}
        outputs.update({name: fn(x, w, layer.params) for name, fn in kernels.items()})
        for name, out in outputs.items():
            where = f"fixture {meta.name}"
            if out.shape != y.shape:
                failures.append(VerifyFailure(name, f"{where} (shape {out.shape} != {y.shape})", float("inf")))
                continue
            err = max_rel_error(out, y)
            max_rel[name] = max(max_rel[name], err)
            if not allclose(out, y, rtol, atol):
                failures.append(VerifyFailure(name, where, err))
    return VerifySummary(len(cases), max_rel, failures)
