"""Architecture descriptors, dendritic substitution and complexity accounting.

A descriptor is an ordered list of items: ``Layer`` (conv2d or linear),
``Pool`` (maxpool or global_avgpool) and ``ResidualBlock`` (a body of layers
plus an optional projection shortcut). Every conv/linear layer carries its
number of dendrites per output neuron ``K``; a dendritic layer with ``C`` output
neurons computes ``K * C`` dendritic maps and sums each group of ``K``.

Operation counting follows the legacy THOP conventions, with dendritic
aggregation sums counted as half a MAC each:

* conv / linear: one MAC per multiply, over all ``K * C_out`` dendritic maps
  (+1 per output element with bias)
* batch norm: 2 per normalised element (after aggregation)
* ReLU: 1 per neuron output element (the dendritic nonlinearity itself is
  not counted separately)
* dendritic aggregation: ``(K - 1)`` sums per neuron and position, 0.5 MAC each
* maxpool: 1 per output element; global average pool: ``H*W + 1`` per output
* residual additions are not counted
"""

from dataclasses import dataclass, field, replace
import csv
import io
import json
import math
from importlib import resources

ROLES = ("input", "interior", "penultimate", "output", "shortcut")


@dataclass(frozen=True)
class Layer:
    name: str
    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    K: int = 1
    bias: bool = False
    bn: bool = False
    relu: bool = True
    # unrounded width after scaling; equals out_channels for unscaled layers
    ideal_out: float = None
    ideal_in: float = None

    def __post_init__(self):
        if self.kind not in ("conv2d", "linear"):
            raise ValueError(f"layer {self.name}: unknown kind {self.kind!r}")
        if self.K < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"layer {self.name}: channels and K must be >= 1")
        if self.ideal_out is None:
            object.__setattr__(self, "ideal_out", float(self.out_channels))
        if self.ideal_in is None:
            object.__setattr__(self, "ideal_in", float(self.in_channels))

    def params(self, ideal=False):
        cin = self.ideal_in if ideal else self.in_channels
        cout = self.ideal_out if ideal else self.out_channels
        k2 = self.kernel * self.kernel if self.kind == "conv2d" else 1
        n = self.K * cout * cin * k2
        if self.bias:
            n += self.K * cout
        if self.bn:
            n += 2 * cout
        return n

    def to_dict(self):
        d = {
            "kind": self.kind, "name": self.name,
            "in_channels": self.in_channels, "out_channels": self.out_channels,
            "kernel": self.kernel, "stride": self.stride, "padding": self.padding,
            "K": self.K, "bias": self.bias, "bn": self.bn, "relu": self.relu,
        }
        if self.ideal_out != self.out_channels:
            d["ideal_out"] = self.ideal_out
        if self.ideal_in != self.in_channels:
            d["ideal_in"] = self.ideal_in
        return d


@dataclass(frozen=True)
class Pool:
    name: str
    kind: str
    kernel: int = 1
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kind not in ("maxpool", "global_avgpool"):
            raise ValueError(f"pool {self.name}: unknown kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "kernel": self.kernel,
                "stride": self.stride, "padding": self.padding}


@dataclass(frozen=True)
class ResidualBlock:
    """Body layers plus a shortcut; the shortcut is added after the body's ReLU.

    Without a projection, the identity shortcut is zero-padded when the body
    widens the channel count (parameter-free).
    """

    name: str
    body: tuple
    shortcut: Layer = None

    def to_dict(self):
        return {"kind": "residual", "name": self.name,
                "body": [l.to_dict() for l in self.body],
                "shortcut": self.shortcut.to_dict() if self.shortcut else None}


@dataclass(frozen=True)
class ArchDescriptor:
    name: str
    input_shape: tuple
    items: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "items", tuple(self.items))
        self.validate()

    def main_layers(self):
        out = []
        for it in self.items:
            if isinstance(it, Layer):
                out.append(it)
            elif isinstance(it, ResidualBlock):
                out.extend(it.body)
        return out

    def all_layers(self):
        out = []
        for it in self.items:
            if isinstance(it, Layer):
                out.append(it)
            elif isinstance(it, ResidualBlock):
                out.extend(it.body)
                if it.shortcut is not None:
                    out.append(it.shortcut)
        return out

    def roles(self):
        """Map layer name to its role in the boundary rules of :func:`scale_architecture`."""
        main = self.main_layers()
        roles = {}
        for i, l in enumerate(main):
            if i == len(main) - 1:
                roles[l.name] = "output"
            elif i == 0:
                roles[l.name] = "input"
            elif i == len(main) - 2:
                roles[l.name] = "penultimate"
            else:
                roles[l.name] = "interior"
        for it in self.items:
            if isinstance(it, ResidualBlock) and it.shortcut is not None:
                roles[it.shortcut.name] = "shortcut"
        return roles

    def validate(self):
        ch = self.input_shape[0]
        names = set()

        def check(layer, c):
            if layer.name in names:
                raise ValueError(f"duplicate layer name {layer.name!r}")
            names.add(layer.name)
            if layer.in_channels != c:
                raise ValueError(
                    f"layer {layer.name}: in_channels {layer.in_channels} != incoming {c}")
            return layer.out_channels

        for it in self.items:
            if isinstance(it, Layer):
                ch = check(it, ch)
            elif isinstance(it, ResidualBlock):
                c_in = ch
                for l in it.body:
                    ch = check(l, ch)
                if it.shortcut is not None:
                    if check(it.shortcut, c_in) != ch:
                        raise ValueError(f"block {it.name}: shortcut width != body width")
                elif c_in > ch:
                    raise ValueError(f"block {it.name}: identity shortcut cannot narrow {c_in}->{ch}")

    def to_dict(self):
        return {"name": self.name, "input_shape": list(self.input_shape),
                "layers": [it.to_dict() for it in self.items]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], tuple(d["input_shape"]), tuple(_item_from_dict(x) for x in d["layers"]))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _layer_from_dict(d):
    return Layer(**d)


def _item_from_dict(d):
    kind = d["kind"]
    if kind in ("conv2d", "linear"):
        return _layer_from_dict(d)
    if kind in ("maxpool", "global_avgpool"):
        return Pool(**d)
    if kind == "residual":
        sc = d.get("shortcut")
        return ResidualBlock(d["name"], tuple(_layer_from_dict(x) for x in d["body"]),
                             _layer_from_dict(sc) if sc else None)
    raise ValueError(f"unknown descriptor item kind {kind!r}")


def resnet_from_table(table):
    """Expand a stage table (see ``data/resnet18.json``) into a descriptor."""
    items = []
    stem = table["stem"]
    c = table["input_shape"][0]
    items.append(Layer("conv1", "conv2d", c, stem["out_channels"], stem["kernel"],
                       stem["stride"], stem["padding"], bn=stem.get("bn", True)))
    c = stem["out_channels"]
    if table.get("stem_pool"):
        p = table["stem_pool"]
        items.append(Pool("maxpool", p["kind"], p["kernel"], p["stride"], p["padding"]))
    for si, st in enumerate(table["stages"], start=1):
        for bi in range(st["blocks"]):
            stride = st["stride"] if bi == 0 else 1
            w = st["width"]
            pre = f"layer{si}.{bi}"
            body = (
                Layer(f"{pre}.conv1", "conv2d", c, w, 3, stride, 1, bn=True),
                Layer(f"{pre}.conv2", "conv2d", w, w, 3, 1, 1, bn=True),
            )
            sc = None
            if stride != 1 or c != w:
                sc = Layer(f"{pre}.downsample", "conv2d", c, w, 1, stride, 0, bn=True, relu=False)
            items.append(ResidualBlock(pre, body, sc))
            c = w
    head = table["head"]
    items.append(Pool("avgpool", head["pool"]))
    items.append(Layer("fc", "linear", c, head["classes"], bias=head.get("bias", True), relu=False))
    return ArchDescriptor(table["name"], tuple(table["input_shape"]), tuple(items))


def load_builtin(name="resnet18"):
    text = resources.files("dendricomm.data").joinpath(f"{name}.json").read_text()
    return resnet_from_table(json.loads(text))


def resnet18():
    return load_builtin("resnet18")


def linear_stack(n_inputs, widths, n_outputs, bias=False, name="mlp"):
    """Fully connected stack ``n_inputs -> widths... -> n_outputs`` (no norm layers)."""
    items = []
    c = n_inputs
    for i, w in enumerate(widths):
        items.append(Layer(f"fc{i}", "linear", c, w, bias=bias))
        c = w
    items.append(Layer("out", "linear", c, n_outputs, bias=bias, relu=False))
    return ArchDescriptor(name, (n_inputs,), tuple(items))


def _scaled(width, factor, what):
    ideal = width * factor
    n = int(math.floor(ideal + 0.5))
    if n < 1:
        raise ValueError(f"{what}: width {width} x {factor:g} rounds to zero channels")
    return n, ideal


def scale_architecture(base, K, width_factor=1.0):
    """Substitute K-dendrite neurons and rescale widths at (roughly) fixed complexity.

    Interior layers get ``K`` dendrites and ``width * width_factor / sqrt(K)``
    neurons. The input layer and the penultimate layer get ``sqrt(K)``
    dendrites; the penultimate layer keeps ``width * width_factor`` outputs so
    the classifier sees the same feature width. Projection shortcuts stay point
    layers at the scaled width; the output layer is untouched apart from its
    input width.
    """
    s = math.isqrt(K) if K >= 1 else 0
    if K < 1 or s * s != K:
        raise ValueError(f"K={K} must be a perfect square (1, 4, 16, 64, ...)")
    if width_factor <= 0:
        raise ValueError("width_factor must be positive")
    roles = base.roles()
    f_hidden = width_factor / s
    state = {"c": base.input_shape[0], "ideal": float(base.input_shape[0])}

    def rescale(l, c_in, ideal_in):
        role = roles[l.name]
        if role == "output":
            out, ideal, k = l.out_channels, float(l.out_channels), 1
        elif role == "penultimate":
            (out, ideal), k = _scaled(l.out_channels, width_factor, l.name), s
        elif role == "input":
            (out, ideal), k = _scaled(l.out_channels, f_hidden, l.name), s
        elif role == "shortcut":
            (out, ideal), k = _scaled(l.out_channels, f_hidden, l.name), 1
        else:
            (out, ideal), k = _scaled(l.out_channels, f_hidden, l.name), K
        return replace(l, in_channels=c_in, out_channels=out, K=k,
                       ideal_in=ideal_in, ideal_out=ideal)

    items = []
    for it in base.items:
        if isinstance(it, Layer):
            nl = rescale(it, state["c"], state["ideal"])
            state["c"], state["ideal"] = nl.out_channels, nl.ideal_out
            items.append(nl)
        elif isinstance(it, ResidualBlock):
            c0, i0 = state["c"], state["ideal"]
            body = []
            for l in it.body:
                nl = rescale(l, state["c"], state["ideal"])
                state["c"], state["ideal"] = nl.out_channels, nl.ideal_out
                body.append(nl)
            sc = rescale(it.shortcut, c0, i0) if it.shortcut is not None else None
            items.append(ResidualBlock(it.name, tuple(body), sc))
        else:
            items.append(it)
    suffix = f"_K{K}" + (f"_w{width_factor:g}" if width_factor != 1 else "")
    return ArchDescriptor(base.name + suffix, base.input_shape, tuple(items))


@dataclass
class LayerCount:
    name: str
    kind: str
    K: int
    in_channels: int
    out_channels: int
    params: int
    ideal_params: float
    macs: float = 0.0


@dataclass
class ComplexityReport:
    arch: str
    layers: list = field(default_factory=list)

    @property
    def total_params(self):
        return sum(l.params for l in self.layers)

    @property
    def total_ideal_params(self):
        return sum(l.ideal_params for l in self.layers)

    @property
    def total_macs(self):
        return sum(l.macs for l in self.layers)

    def by_name(self):
        return {l.name: l for l in self.layers}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "kind", "K", "in_channels", "out_channels", "params", "ideal_params", "macs"])
        for l in self.layers:
            w.writerow([l.name, l.kind, l.K, l.in_channels, l.out_channels, l.params,
                        repr(float(l.ideal_params)), repr(float(l.macs))])
        return buf.getvalue()


def count_params(arch):
    rep = ComplexityReport(arch.name)
    for l in arch.all_layers():
        rep.layers.append(LayerCount(l.name, l.kind, l.K, l.in_channels, l.out_channels,
                                     l.params(), l.params(ideal=True)))
    return rep


def _conv_out(size, k, s, p, name):
    out = (size + 2 * p - k) // s + 1
    if out < 1:
        raise ValueError(f"{name}: spatial size {size} collapses (k={k}, s={s}, p={p})")
    return out


def _layer_ops(l, shape):
    """Return (ops, output shape) for one conv/linear layer under the counting rules."""
    if l.kind == "linear":
        if len(shape) != 1:
            raise ValueError(f"{l.name}: linear layer needs a flat input, got shape {shape}")
        if shape[0] != l.in_channels:
            raise ValueError(f"{l.name}: input width {shape[0]} != in_channels {l.in_channels}")
        positions, out_shape = 1, (l.out_channels,)
    else:
        if len(shape) != 3:
            raise ValueError(f"{l.name}: conv2d needs (C, H, W) input, got {shape}")
        c, h, w = shape
        if c != l.in_channels:
            raise ValueError(f"{l.name}: input channels {c} != in_channels {l.in_channels}")
        h2 = _conv_out(h, l.kernel, l.stride, l.padding, l.name)
        w2 = _conv_out(w, l.kernel, l.stride, l.padding, l.name)
        positions, out_shape = h2 * w2, (l.out_channels, h2, w2)
    k2 = l.kernel * l.kernel if l.kind == "conv2d" else 1
    dendrite_elems = l.K * l.out_channels * positions
    neuron_elems = l.out_channels * positions
    ops = dendrite_elems * l.in_channels * k2
    if l.bias:
        ops += dendrite_elems
    if l.relu:
        ops += neuron_elems
    ops += 0.5 * (l.K - 1) * neuron_elems
    if l.bn:
        ops += 2 * neuron_elems
    return ops, out_shape


def _pool_ops(p, shape):
    if p.kind == "global_avgpool":
        c = shape[0]
        hw = math.prod(shape[1:]) if len(shape) > 1 else 1
        return c * (hw + 1), (c,)
    c, h, w = shape
    h2 = _conv_out(h, p.kernel, p.stride, p.padding, p.name)
    w2 = _conv_out(w, p.kernel, p.stride, p.padding, p.name)
    return c * h2 * w2, (c, h2, w2)


def count_macs(arch, input_shape=None):
    """Per-layer parameter and operation counts; pooling ops are attached to a pseudo-layer row."""
    shape = tuple(input_shape) if input_shape is not None else arch.input_shape
    rep = ComplexityReport(arch.name)

    def add(l, shp):
        ops, out = _layer_ops(l, shp)
        rep.layers.append(LayerCount(l.name, l.kind, l.K, l.in_channels, l.out_channels,
                                     l.params(), l.params(ideal=True), ops))
        return out

    for it in arch.items:
        if isinstance(it, Layer):
            shape = add(it, shape)
        elif isinstance(it, Pool):
            ops, shape = _pool_ops(it, shape)
            rep.layers.append(LayerCount(it.name, it.kind, 1, shape[0], shape[0], 0, 0.0, ops))
        else:
            x = shape
            for l in it.body:
                shape = add(l, shape)
            if it.shortcut is not None:
                sc = add(it.shortcut, x)
                if sc != shape:
                    raise ValueError(f"block {it.name}: shortcut shape {sc} != body shape {shape}")
            elif x[1:] != shape[1:]:
                raise ValueError(f"block {it.name}: identity shortcut spatial mismatch {x} vs {shape}")
    return rep


def _hidden_width(arch):
    roles = arch.roles()
    return {l.name: l.out_channels for l in arch.main_layers()
            if roles[l.name] in ("input", "interior")}


def psi(arch, baseline):
    """Neuron-count ratio over the input and interior layers.

    The penultimate and output layers are excluded because the boundary rule
    keeps their widths tied to the classifier rather than to ``D``.
    """
    a, b = _hidden_width(arch), _hidden_width(baseline)
    if a.keys() != b.keys():
        raise ValueError("architectures do not align layer-by-layer")
    return sum(a.values()) / sum(b.values())


def complexity_table(base=None, Ks=(1, 4, 16, 64), width_factor=1.0):
    """Rows of (K, psi, MMACs, params) mirroring the model-complexity table."""
    base = base if base is not None else resnet18()
    rows = []
    for K in Ks:
        arch = scale_architecture(base, K, width_factor)
        rep = count_macs(arch)
        rows.append({"K": K, "psi": psi(arch, base), "mmacs": rep.total_macs / 1e6,
                     "params": rep.total_params, "ideal_params": rep.total_ideal_params})
    return rows


def deviation_by_layer(arch, base):
    """Per-layer parameter difference ``arch - base`` (nonzero rows only)."""
    a, b = count_params(arch).by_name(), count_params(base).by_name()
    return {n: a[n].params - b[n].params for n in b if a[n].params != b[n].params}
