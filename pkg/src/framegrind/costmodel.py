"""Analytic parameter and FLO counts for layer-described CNNs.

Counting conventions:

* one multiply-accumulate is one FLO (this is the convention under which
  MobileNet-224 costs about 0.57e9; counting multiplies and adds separately
  would double every figure);
* convolutions use "same" padding, so a layer's output side is
  ``ceil(input / stride)``;
* the width multiplier ``alpha`` scales every channel count except the image
  channels, rounding to the nearest multiple of 8 with a floor of 8;
* the resolution multiplier ``rho`` sets the input side to
  ``round(base_input * rho)``; parameters do not depend on it;
* every network ends in a single-unit dense head (with bias) in place of its
  original classifier; batch-norm parameters are not counted.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from collections import OrderedDict
from dataclasses import dataclass
from importlib import resources

CONV, DEPTHWISE, DENSE, POOL, GLOBAL_POOL, ADD = (
    "Conv", "DepthwiseConv", "Dense", "Pool", "GlobalPool", "Add")
LAYER_KINDS = (CONV, DEPTHWISE, DENSE, POOL, GLOBAL_POOL, ADD)
UNAVAILABLE = "*"


class ArchitectureError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvalidAlpha(ValueError):
    pass


class InvalidRho(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    k: int = 1
    stride: int = 1
    in_channels: int | None = None
    out_channels: int | None = None
    input_spatial: int | None = None  # base-resolution override, e.g. for shortcut branches

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ArchitectureError(f"unknown layer kind {self.kind!r}")
        if self.k < 1 or self.stride < 1:
            raise ArchitectureError("kernel and stride must be >= 1")
        if self.kind in (CONV,) and (self.in_channels is None or self.out_channels is None):
            raise ArchitectureError("Conv layers need in and out channels")
        if self.kind == DEPTHWISE and self.in_channels is None:
            raise ArchitectureError("DepthwiseConv layers need in channels")
        if self.kind == DEPTHWISE and self.out_channels not in (None, self.in_channels):
            raise ArchitectureError("DepthwiseConv must keep the channel count")
        if self.kind == DENSE and self.out_channels is None:
            raise ArchitectureError("Dense layers need out units")


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    head_in: int
    base_input: int = 224
    width_multiplier: bool = True
    image_channels: int = 3

    @property
    def head(self) -> tuple[int, int]:
        """(feature dim, 1): the single sigmoid unit replacing the classifier."""
        return (self.head_in, 1)


@dataclass(frozen=True)
class CostReportRow:
    name: str
    alpha: float
    rho: float
    params: int | None
    flo: int | None

    @property
    def available(self) -> bool:
        return self.params is not None and self.flo is not None


@dataclass(frozen=True)
class LayerCost:
    layer: LayerSpec
    in_channels: int
    out_channels: int
    in_spatial: int
    out_spatial: int
    params: int
    flo: int


# ---------------------------------------------------------------------------
# counting


def scale_channels(c: int, alpha: float) -> int:
    """Nearest multiple of 8 to ``c * alpha``, at least 8; exact at alpha = 1."""
    if alpha == 1.0:
        return int(c)
    return max(8, int(math.floor(c * alpha / 8.0 + 0.5)) * 8)


def _check_alpha(alpha):
    if not (0.0 < alpha <= 1.0):
        raise InvalidAlpha(f"width multiplier must lie in (0, 1], got {alpha}")


def _check_rho(rho):
    if not (0.0 < rho <= 1.0):
        raise InvalidRho(f"resolution multiplier must lie in (0, 1], got {rho}")


def input_resolution(arch: ArchitectureSpec, rho: float) -> int:
    return int(round(arch.base_input * rho))


def layer_costs(arch: ArchitectureSpec, alpha: float = 1.0, rho: float = 1.0) -> list[LayerCost]:
    """Per-layer shapes and closed-form costs, head excluded."""
    _check_alpha(alpha)
    _check_rho(rho)
    a = alpha if arch.width_multiplier else 1.0
    res = input_resolution(arch, rho)
    spatial, channels = res, arch.image_channels
    costs = []
    for i, layer in enumerate(arch.layers):
        if layer.input_spatial is not None:
            spatial = math.ceil(layer.input_spatial * res / arch.base_input)
        cin = channels
        if layer.in_channels is not None:
            cin = layer.in_channels if i == 0 else scale_channels(layer.in_channels, a)
            if layer.input_spatial is None and cin != channels and layer.kind != DENSE:
                raise ArchitectureError(
                    f"layer {i} ({layer.kind}) expects {cin} input channels, has {channels}")
        if spatial < 1:
            raise ArchitectureError(f"layer {i} receives an empty feature map")
        k2 = layer.k * layer.k
        if layer.kind == CONV:
            cout = scale_channels(layer.out_channels, a)
            out_sp = -(-spatial // layer.stride)
            params = k2 * cin * cout + cout
            flo = k2 * cin * cout * out_sp * out_sp
        elif layer.kind == DEPTHWISE:
            cout = cin
            out_sp = -(-spatial // layer.stride)
            params = k2 * cin + cin
            flo = k2 * cin * out_sp * out_sp
        elif layer.kind == DENSE:
            if layer.in_channels is None:
                cin = channels * spatial * spatial  # flatten
            cout = scale_channels(layer.out_channels, a)
            out_sp = 1
            params = cin * cout + cout
            flo = cin * cout
        elif layer.kind == POOL:
            cout = cin
            out_sp = -(-spatial // layer.stride)
            params = flo = 0
        elif layer.kind == GLOBAL_POOL:
            cout, out_sp, params, flo = cin, 1, 0, 0
        else:  # ADD
            cout, out_sp, params, flo = cin, spatial, 0, 0
        costs.append(LayerCost(layer, cin, cout, spatial, out_sp, params, flo))
        spatial, channels = out_sp, cout
    return costs


def _head_in(arch: ArchitectureSpec, alpha: float, costs: list[LayerCost]) -> int:
    a = alpha if arch.width_multiplier else 1.0
    feat = scale_channels(arch.head_in, a)
    if costs:
        last = costs[-1]
        got = last.out_channels * last.out_spatial * last.out_spatial
        if feat != got:
            raise ArchitectureError(f"head expects {feat} features, body yields {got}")
    return feat


def count_params(arch: ArchitectureSpec, alpha: float = 1.0) -> int:
    """Trainable weights and biases, including the 1-unit head. Independent of rho."""
    costs = layer_costs(arch, alpha, 1.0)
    feat = _head_in(arch, alpha, costs)
    return sum(c.params for c in costs) + feat + 1


def count_flops(arch: ArchitectureSpec, alpha: float = 1.0, rho: float = 1.0) -> int:
    """Multiply-accumulates per frame, including the 1-unit head."""
    costs = layer_costs(arch, alpha, rho)
    feat = _head_in(arch, alpha, costs)
    return sum(c.flo for c in costs) + feat


# ---------------------------------------------------------------------------
# reports


def variant_name(arch: ArchitectureSpec, alpha: float, rho: float) -> str:
    if not arch.width_multiplier and alpha == 1.0 and rho == 1.0:
        return arch.name
    return f"{arch.name} (alpha={alpha:g}, rho={rho:g})"


def table_report(archs, variants=None, unavailable=()) -> list[CostReportRow]:
    """Rows sorted by ascending FLO (ties by params); unavailable rows last.

    ``variants`` is either a list of ``(alpha, rho)`` pairs applied to every
    width-scalable architecture, or a mapping from architecture name to such
    a list. Fixed-width architectures default to ``[(1, 1)]``. Names in
    ``unavailable``, and variants the model cannot evaluate, get ``*``.
    """
    rows = []
    for arch in archs:
        if isinstance(variants, dict):
            vs = variants.get(arch.name, [(1.0, 1.0)])
        elif variants is not None and arch.width_multiplier:
            vs = variants
        else:
            vs = [(1.0, 1.0)]
        for alpha, rho in vs:
            name = variant_name(arch, alpha, rho)
            params = flo = None
            if arch.name not in unavailable and name not in unavailable:
                try:
                    params = count_params(arch, alpha)
                    flo = count_flops(arch, alpha, rho)
                except ArchitectureError:
                    params = flo = None
            rows.append(CostReportRow(name, float(alpha), float(rho), params, flo))
    avail = sorted((r for r in rows if r.available), key=lambda r: (r.flo, r.params, r.name))
    return avail + [r for r in rows if not r.available]


CSV_HEADER = ("name", "alpha", "rho", "params", "flo")


def _cell(v):
    return UNAVAILABLE if v is None else str(v)


def report_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.name, repr(r.alpha), repr(r.rho), _cell(r.params), _cell(r.flo)])
    return buf.getvalue()


def report_from_csv(text: str) -> list[CostReportRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected cost report header {header}")
    rows = []
    for name, alpha, rho, params, flo in reader:
        rows.append(CostReportRow(name, float(alpha), float(rho),
                                  None if params == UNAVAILABLE else int(params),
                                  None if flo == UNAVAILABLE else int(flo)))
    return rows


def report_to_json(rows) -> str:
    out = [OrderedDict([("name", r.name), ("alpha", r.alpha), ("rho", r.rho),
                        ("params", UNAVAILABLE if r.params is None else r.params),
                        ("flo", UNAVAILABLE if r.flo is None else r.flo)]) for r in rows]
    return json.dumps(out, indent=1) + "\n"


def report_from_json(text: str) -> list[CostReportRow]:
    return [CostReportRow(d["name"], float(d["alpha"]), float(d["rho"]),
                          None if d["params"] == UNAVAILABLE else int(d["params"]),
                          None if d["flo"] == UNAVAILABLE else int(d["flo"]))
            for d in json.loads(text)]


# ---------------------------------------------------------------------------
# architecture files


_KIND_KEY = re.compile(r'"kind"\s*:')


def _layer_lines(text: str) -> list[int]:
    return [text.count("\n", 0, m.start()) + 1 for m in _KIND_KEY.finditer(text)]


def parse_architecture(text: str, source: str = "<string>") -> ArchitectureSpec:
    """Parse ``{name, base_input, layers: [{kind, k, stride, in, out}], head: {in}}``.

    Errors carry the line of the offending layer (layers are located by their
    ``"kind"`` key, in order).
    """
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArchitectureError(f"{source}: invalid JSON ({exc.msg})", exc.lineno) from None
    lines = _layer_lines(text)
    layers = []
    for i, ld in enumerate(d.get("layers", [])):
        line = lines[i] if i < len(lines) else None
        try:
            layers.append(LayerSpec(kind=ld["kind"], k=int(ld.get("k", 1)),
                                    stride=int(ld.get("stride", 1)),
                                    in_channels=ld.get("in"), out_channels=ld.get("out"),
                                    input_spatial=ld.get("input")))
        except KeyError as exc:
            raise ArchitectureError(f"{source}: layer {i} lacks {exc}", line) from None
        except ArchitectureError as exc:
            raise ArchitectureError(f"{source}: layer {i}: {exc}", line) from None
    try:
        arch = ArchitectureSpec(name=d["name"], layers=tuple(layers), head_in=int(d["head"]["in"]),
                                base_input=int(d.get("base_input", 224)),
                                width_multiplier=bool(d.get("width_multiplier", True)),
                                image_channels=int(d.get("image_channels", 3)))
    except (KeyError, TypeError) as exc:
        raise ArchitectureError(f"{source}: missing field {exc}") from None
    try:
        count_params(arch, 1.0)
    except ArchitectureError as exc:
        raise ArchitectureError(f"{source}: {exc}") from None
    return arch


def load_architecture(path) -> ArchitectureSpec:
    with open(path) as fh:
        return parse_architecture(fh.read(), os.fspath(path))


def load_architecture_dir(path) -> list[ArchitectureSpec]:
    names = sorted(f for f in os.listdir(path) if f.endswith(".json"))
    return [load_architecture(os.path.join(path, f)) for f in names]


SHIPPED = ("mobilenet_v1", "vgg16", "resnet50")


def shipped_architecture(name: str) -> ArchitectureSpec:
    text = resources.files("framegrind").joinpath(f"data/architectures/{name}.json").read_text()
    return parse_architecture(text, f"{name}.json")


def shipped_architectures() -> list[ArchitectureSpec]:
    return [shipped_architecture(n) for n in SHIPPED]


def shipped_architecture_dir() -> str:
    return os.fspath(resources.files("framegrind").joinpath("data/architectures"))


#: (alpha, rho) pairs evaluated for MobileNet.
MOBILENET_VARIANTS = [(a, r) for a in (0.25, 0.5, 0.75, 1.0) for r in (0.714, 1.0)]
