"""Declarative model specs, the substitution rule, and runnable models.

A ModelSpec is an input shape plus an ordered list of layer descriptors. The
text form is one layer per line, `type key=value ...`:

    input c=3 h=32 w=32
    conv out=32 k=3 stride=1 pad=1 relu=1
    maxpool
    scfusion out=32 k=3 stride=1 pad=1 alpha=4 add=1 inv=1 sc=1 relu=1
    resblock k=3 pad=1
    gap
    fc out=10

`resblock` is an identity-shortcut block: two same-channel stride-1 convs
with a ReLU between, added back onto the input, then ReLU. With `alpha=...`
(plus add/inv/sc flags) its inner convs are fusion modules instead of dense
convs. Parse/emit of the text form round-trips losslessly.

substitute_scfusion() applies the standard compression rule: every conv
layer except the model's first is replaced by a full fusion module with the
same (c_in, c_out, k, stride, pad) interface, so all inter-layer shapes are
preserved. Residual shortcut adds stay plain tensor adds; FC layers are
never substituted.
"""

import dataclasses
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import autodiff as ad
from . import conv as C
from .fusion import SCFusionConfig, SCFusionLayer


@dataclass
class ConvD:
    out: int
    k: int
    stride: int = 1
    pad: int = 0
    relu: bool = True


@dataclass
class SCFusionD:
    out: int
    k: int
    stride: int = 1
    pad: int = 0
    alpha: Fraction = Fraction(4)
    add: bool = True
    inv: bool = True
    sc: bool = True
    relu: bool = True


@dataclass
class MaxPoolD:
    pass


@dataclass
class GapD:
    pass


@dataclass
class FcD:
    out: int


@dataclass
class ResBlockD:
    k: int = 3
    pad: int = 1
    alpha: Fraction = None  # None: dense inner convs
    add: bool = True
    inv: bool = True
    sc: bool = True


@dataclass
class ModelSpec:
    input_shape: tuple
    layers: list
    name: str = ""


def _flag(v):
    return "1" if v else "0"


def _parse_flag(s):
    if s not in ("0", "1"):
        raise ValueError(f"expected 0/1 flag, got {s!r}")
    return s == "1"


def emit_spec(spec):
    """Serialize to the one-layer-per-line text format."""
    c, h, w = spec.input_shape
    lines = [f"input c={c} h={h} w={w}"]
    for layer in spec.layers:
        if isinstance(layer, ConvD):
            lines.append(
                f"conv out={layer.out} k={layer.k} stride={layer.stride} "
                f"pad={layer.pad} relu={_flag(layer.relu)}"
            )
        elif isinstance(layer, SCFusionD):
            lines.append(
                f"scfusion out={layer.out} k={layer.k} stride={layer.stride} "
                f"pad={layer.pad} alpha={Fraction(layer.alpha)} add={_flag(layer.add)} "
                f"inv={_flag(layer.inv)} sc={_flag(layer.sc)} relu={_flag(layer.relu)}"
            )
        elif isinstance(layer, MaxPoolD):
            lines.append("maxpool")
        elif isinstance(layer, GapD):
            lines.append("gap")
        elif isinstance(layer, FcD):
            lines.append(f"fc out={layer.out}")
        elif isinstance(layer, ResBlockD):
            line = f"resblock k={layer.k} pad={layer.pad}"
            if layer.alpha is not None:
                line += (
                    f" alpha={Fraction(layer.alpha)} add={_flag(layer.add)}"
                    f" inv={_flag(layer.inv)} sc={_flag(layer.sc)}"
                )
            lines.append(line)
        else:
            raise TypeError(f"unknown layer descriptor {type(layer).__name__}")
    return "\n".join(lines) + "\n"


def parse_spec(text, name=""):
    """Parse the text format back into a ModelSpec."""
    layers = []
    input_shape = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind, kv = parts[0], {}
        for item in parts[1:]:
            if "=" not in item:
                raise ValueError(f"line {lineno}: expected key=value, got {item!r}")
            key, val = item.split("=", 1)
            kv[key] = val
        try:
            if kind == "input":
                input_shape = (int(kv["c"]), int(kv["h"]), int(kv["w"]))
            elif kind == "conv":
                layers.append(ConvD(int(kv["out"]), int(kv["k"]), int(kv["stride"]),
                                    int(kv["pad"]), _parse_flag(kv["relu"])))
            elif kind == "scfusion":
                layers.append(SCFusionD(int(kv["out"]), int(kv["k"]), int(kv["stride"]),
                                        int(kv["pad"]), Fraction(kv["alpha"]),
                                        _parse_flag(kv["add"]), _parse_flag(kv["inv"]),
                                        _parse_flag(kv["sc"]), _parse_flag(kv["relu"])))
            elif kind == "maxpool":
                layers.append(MaxPoolD())
            elif kind == "gap":
                layers.append(GapD())
            elif kind == "fc":
                layers.append(FcD(int(kv["out"])))
            elif kind == "resblock":
                alpha = Fraction(kv["alpha"]) if "alpha" in kv else None
                layers.append(ResBlockD(int(kv["k"]), int(kv["pad"]), alpha,
                                        _parse_flag(kv.get("add", "1")),
                                        _parse_flag(kv.get("inv", "1")),
                                        _parse_flag(kv.get("sc", "1"))))
            else:
                raise ValueError(f"unknown layer type {kind!r}")
        except KeyError as e:
            raise ValueError(f"line {lineno}: missing field {e} for {kind}") from None
        except ValueError as e:
            raise ValueError(f"line {lineno}: {e}") from None
    if input_shape is None:
        raise ValueError("spec has no input line")
    return ModelSpec(input_shape=input_shape, layers=layers, name=name)


def _layer_kind(layer):
    return type(layer).__name__.removesuffix("D").lower()


def propagate(spec):
    """Per-layer output shapes (c, h, w); raises naming the failing layer."""
    c, h, w = spec.input_shape
    if min(spec.input_shape) < 1:
        raise ValueError(f"input shape must be positive, got {spec.input_shape}")
    shapes = [(c, h, w)]
    for i, layer in enumerate(spec.layers):
        try:
            if isinstance(layer, (ConvD, SCFusionD)):
                geom = C.ConvGeometry(layer.k, layer.stride, layer.pad)
                ho, wo = geom.out_hw(h, w)
                c, h, w = layer.out, ho, wo
            elif isinstance(layer, ResBlockD):
                geom = C.ConvGeometry(layer.k, 1, layer.pad)
                ho, wo = geom.out_hw(h, w)
                if (ho, wo) != (h, w):
                    raise ValueError(
                        f"identity shortcut needs shape-preserving convs, "
                        f"k={layer.k} pad={layer.pad} maps {h}x{w} to {ho}x{wo}"
                    )
            elif isinstance(layer, MaxPoolD):
                if h % 2 or w % 2:
                    raise ValueError(f"maxpool needs even dims, got {h}x{w}")
                h, w = h // 2, w // 2
            elif isinstance(layer, GapD):
                h = w = 1
            elif isinstance(layer, FcD):
                c, h, w = layer.out, 1, 1
            else:
                raise TypeError(f"unknown layer descriptor {type(layer).__name__}")
        except ValueError as e:
            raise ValueError(f"layer {i} ({_layer_kind(layer)}): {e}") from None
        shapes.append((c, h, w))
    return shapes


def substitute_scfusion(spec, alpha):
    """Replace every conv except the model's first with a full fusion module."""
    alpha = Fraction(alpha)
    if not any(isinstance(l, (ConvD, ResBlockD)) for l in spec.layers):
        raise ValueError("spec has no convolutional layers to substitute")
    out = []
    seen_conv = False
    for layer in spec.layers:
        if isinstance(layer, ConvD):
            if not seen_conv:
                out.append(dataclasses.replace(layer))
            else:
                out.append(SCFusionD(out=layer.out, k=layer.k, stride=layer.stride,
                                     pad=layer.pad, alpha=alpha, add=True, inv=True,
                                     sc=True, relu=layer.relu))
            seen_conv = True
        elif isinstance(layer, ResBlockD):
            if not seen_conv:
                # a block holding the model's first conv stays dense wholesale
                out.append(dataclasses.replace(layer))
            else:
                out.append(dataclasses.replace(layer, alpha=alpha, add=True, inv=True, sc=True))
            seen_conv = True
        else:
            out.append(dataclasses.replace(layer))
    name = f"{spec.name}-scfusion-{alpha}" if spec.name else ""
    return ModelSpec(input_shape=spec.input_shape, layers=out, name=name)


# ---------------------------------------------------------------------------
# built (runnable) layers


class ConvLayer:
    def __init__(self, d, c_in, seed, name):
        self.d = d
        self.geom = C.ConvGeometry(d.k, d.stride, d.pad)
        rng = np.random.default_rng(seed)
        std = np.sqrt(2.0 / (c_in * d.k * d.k))
        w = rng.normal(0.0, std, size=(d.out, c_in, d.k, d.k)).astype(np.float32)
        self.w = ad.Parameter(w, f"{name}.w")

    def parameters(self):
        return [self.w]

    def forward(self, x, tape=None, counter=None):
        y = ad.conv2d_dense(tape, x, self.w, self.geom, counter)
        return ad.relu(tape, y) if self.d.relu else y


class FusionHostLayer:
    def __init__(self, d, c_in, seed, name):
        self.d = d
        cfg = SCFusionConfig(c_in=c_in, c_out=d.out, k=d.k, stride=d.stride,
                             padding=d.pad, alpha=d.alpha, use_addition=d.add,
                             use_inverse=d.inv, sc_kernels=d.sc)
        self.inner = SCFusionLayer(cfg, seed=seed, name=name)

    def parameters(self):
        return self.inner.parameters()

    def forward(self, x, tape=None, counter=None):
        y = self.inner.forward(x, tape, counter)
        return ad.relu(tape, y) if self.d.relu else y


class MaxPoolLayer:
    def parameters(self):
        return []

    def forward(self, x, tape=None, counter=None):
        return ad.maxpool2x2(tape, x)


class GapLayer:
    def parameters(self):
        return []

    def forward(self, x, tape=None, counter=None):
        return ad.global_avg_pool(tape, x)


class FcLayer:
    def __init__(self, d, in_features, seed, name):
        rng = np.random.default_rng(seed)
        std = np.sqrt(2.0 / in_features)
        w = rng.normal(0.0, std, size=(d.out, in_features)).astype(np.float32)
        self.w = ad.Parameter(w, f"{name}.w")
        self.b = ad.Parameter(np.zeros(d.out, dtype=np.float32), f"{name}.b")

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x, tape=None, counter=None):
        return ad.fc(tape, x, self.w, self.b, counter)


class ResBlockLayer:
    """branch = conv/fusion -> ReLU -> conv/fusion; out = ReLU(branch + x)."""

    def __init__(self, d, c_in, seed, name):
        if d.alpha is None:
            ca = ConvD(out=c_in, k=d.k, stride=1, pad=d.pad, relu=True)
            cb = ConvD(out=c_in, k=d.k, stride=1, pad=d.pad, relu=False)
            self.a = ConvLayer(ca, c_in, (*seed, 0), f"{name}.a")
            self.b = ConvLayer(cb, c_in, (*seed, 1), f"{name}.b")
        else:
            fa = SCFusionD(out=c_in, k=d.k, stride=1, pad=d.pad, alpha=d.alpha,
                           add=d.add, inv=d.inv, sc=d.sc, relu=True)
            fb = dataclasses.replace(fa, relu=False)
            self.a = FusionHostLayer(fa, c_in, (*seed, 0), f"{name}.a")
            self.b = FusionHostLayer(fb, c_in, (*seed, 1), f"{name}.b")

    def parameters(self):
        return self.a.parameters() + self.b.parameters()

    def forward(self, x, tape=None, counter=None):
        h = self.a.forward(x, tape, counter)
        h = self.b.forward(h, tape, counter)
        return ad.relu(tape, ad.add(tape, h, x))


class Model:
    def __init__(self, spec, layers):
        self.spec = spec
        self.layers = layers
        self.norm_mean = None
        self.norm_std = None

    def forward(self, x, tape=None, counter=None):
        v = ad.as_var(x)
        for layer in self.layers:
            v = layer.forward(v, tape, counter)
        return v

    def parameters(self):
        ps = []
        for layer in self.layers:
            ps.extend(layer.parameters())
        return ps

    def parameter_count(self):
        """Learnable scalars; masked-out kernel positions do not count."""
        return sum(p.learnable_count() for p in self.parameters())

    def zero_grads(self):
        for p in self.parameters():
            p.grad = None


def build(spec, seed=0):
    """Instantiate a runnable model; deterministic for a fixed seed."""
    shapes = propagate(spec)
    layers = []
    for i, d in enumerate(spec.layers):
        c_in, h, w = shapes[i]
        name = f"layer{i}"
        lseed = (seed, i)
        if isinstance(d, ConvD):
            layers.append(ConvLayer(d, c_in, lseed, name))
        elif isinstance(d, SCFusionD):
            layers.append(FusionHostLayer(d, c_in, lseed, name))
        elif isinstance(d, MaxPoolD):
            layers.append(MaxPoolLayer())
        elif isinstance(d, GapD):
            layers.append(GapLayer())
        elif isinstance(d, FcD):
            layers.append(FcLayer(d, c_in * h * w, lseed, name))
        elif isinstance(d, ResBlockD):
            layers.append(ResBlockLayer(d, c_in, lseed, name))
        else:
            raise TypeError(f"unknown layer descriptor {type(d).__name__}")
    return Model(spec, layers)


def presets():
    """Built-in desk-scale host specs, dense and substituted variants."""
    tiny_vgg = ModelSpec((3, 32, 32), [
        ConvD(32, 3, 1, 1, True),
        ConvD(32, 3, 1, 1, True),
        MaxPoolD(),
        ConvD(32, 3, 1, 1, True),
        ConvD(32, 3, 1, 1, True),
        MaxPoolD(),
        GapD(),
        FcD(10),
    ], name="tiny-vgg")
    tiny_resnet = ModelSpec((3, 32, 32), [
        ConvD(16, 3, 1, 1, True),
        ResBlockD(3, 1),
        MaxPoolD(),
        ConvD(32, 3, 1, 1, True),
        ResBlockD(3, 1),
        MaxPoolD(),
        GapD(),
        FcD(10),
    ], name="tiny-resnet")
    out = {s.name: s for s in (tiny_vgg, tiny_resnet)}
    for base in (tiny_vgg, tiny_resnet):
        for alpha in (2, 4, 8):
            sub = substitute_scfusion(base, alpha)
            sub.name = f"{base.name}-scfusion-{alpha}"
            out[sub.name] = sub
    return out
